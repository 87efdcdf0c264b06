"""The end-to-end experiment: generate a synthetic corpus with a matched
("neutral") and a mismatched ("shouted") test condition, train every
model variant, and build the cross-variant comparison report.

By default this runs a quick 4-speaker version (a few seconds). Pass
--full for the 10-speaker desk-scale protocol (about half a minute).

    python3 demos/05_speaker_id_experiment.py [--full]
"""

import argparse

from hmmsid import (
    CorpusSpec,
    SpeakerRegistry,
    TrainConfig,
    VariantSpec,
    comparison_report,
    evaluate,
    sample_corpus,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--full", action="store_true",
                        help="run the full 10-speaker protocol")
    args = parser.parse_args()

    if args.full:
        spec = CorpusSpec()
    else:
        spec = CorpusSpec(n_speakers=4, n_words=2, n_train=3,
                          n_test_neutral=3, n_test_shouted=4)
    print(f"corpus: {spec.n_speakers} speakers x {spec.n_words} words, "
          f"{spec.n_train} train / {spec.n_test_neutral} matched-test / "
          f"{spec.n_test_shouted} mismatched-test utterances per word")
    print("training uses matched-condition utterances only; the mismatched")
    print("test condition adds a deterministic low-order cepstral shift plus")
    print("inflated generator noise.\n")

    pairs = sample_corpus(spec)
    train_sets = {}
    for row, features in pairs:
        if row.split == "train":
            train_sets.setdefault((row.speaker_id, row.word_id), []).append(features)

    config = TrainConfig(max_iterations=20, rel_tol=1e-6, seed=0)
    results = {}
    for order in (1, 2):
        for topology in ("ltr", "circular"):
            variant = VariantSpec(order=order, topology=topology,
                                  n_states=5, n_mixtures=2)
            registry = SpeakerRegistry()
            for (speaker, word), utterances in sorted(train_sets.items()):
                registry.enroll(speaker, word, variant, utterances, config)
            result = evaluate(registry, pairs, variant.label)
            results[variant.label] = result
            print(f"trained and scored {variant.label}: "
                  f"matched {result.accuracy('neutral'):.1f}%, "
                  f"mismatched {result.accuracy('shouted'):.1f}%")

    print()
    report = comparison_report(results, reference="circ2")
    print(report.text())
    print("Synthetic data reproduces the protocol's shape (high matched")
    print("accuracy, degraded mismatched accuracy); it does not license any")
    print("claim about which variant is best on real speech.")


if __name__ == "__main__":
    main()
