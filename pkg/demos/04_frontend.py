"""Walk through the speech front end: pre-emphasis, framing, linear
prediction, the cepstral recursion, and mean subtraction.

    python3 demos/04_frontend.py
"""

import numpy as np

from hmmsid import (
    FrontendConfig,
    autocorrelation,
    cepstral_mean_subtraction,
    extract_features,
    lpc_levinson_durbin,
    pre_emphasize,
)


def main():
    rng = np.random.default_rng(12)

    print("== Pre-emphasis ==")
    print("A first-difference high-pass filter y[n] = x[n] - 0.95 x[n-1]")
    print("whitens the spectral tilt of voiced speech before analysis:")
    x = np.array([1.0, 1.0, 1.0, 1.0])
    print(f"constant input  {x.tolist()} -> {np.round(pre_emphasize(x, 0.95), 4).tolist()}")

    print("\n== Linear prediction on a known filter ==")
    print("Drive an order-2 all-pole filter with white noise, then recover")
    print("its coefficients from the autocorrelation sequence:")
    coeffs = np.array([1.2, -0.6])
    noise = rng.standard_normal(8000)
    signal = np.zeros(8000)
    for n in range(8000):
        acc = noise[n]
        if n >= 1:
            acc += coeffs[0] * signal[n - 1]
        if n >= 2:
            acc += coeffs[1] * signal[n - 2]
        signal[n] = acc
    r = autocorrelation(signal, 2)
    a, err, k = lpc_levinson_durbin(r, 2)
    print(f"planted coefficients:   {coeffs.tolist()}")
    print(f"recovered coefficients: {np.round(a, 3).tolist()}")
    print(f"reflection coefficients {np.round(k, 3).tolist()} "
          "(all inside the unit interval -> stable)")

    print("\n== Full front end ==")
    config = FrontendConfig()  # 8 kHz, 30 ms window, 10 ms hop, 12 coefficients
    speech_like = 0.3 * np.sin(2 * np.pi * 180 * np.arange(8000) / 8000)
    speech_like += 0.05 * rng.standard_normal(8000)
    features = extract_features(speech_like, config)
    print(f"one second of 8 kHz audio -> {features.n_frames} frames "
          f"x {features.n_dims} cepstral coefficients")
    print(f"configuration hash embedded in every cache: {features.meta.config_hash}")

    print("\n== Cepstral mean subtraction ==")
    print("Subtracting each utterance's mean cepstrum removes any fixed")
    print("convolutional coloring (microphone, channel, spectral tilt):")
    shifted = type(features)(features.frames + np.linspace(1, 0.2, 12))
    cleaned_a = cepstral_mean_subtraction(features)
    cleaned_b = cepstral_mean_subtraction(shifted)
    residual = np.abs(cleaned_a.frames - cleaned_b.frames).max()
    print(f"max difference after cleaning two differently-colored copies: "
          f"{residual:.2e}")


if __name__ == "__main__":
    main()
