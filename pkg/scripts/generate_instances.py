#!/usr/bin/env python3
"""Regenerate the bundled instance files deterministically.

Run from the repository root after an editable install:

    python scripts/generate_instances.py
"""

from pathlib import Path

from qmtree.hamiltonian import (
    calibrated_no_instance,
    frustrated_instance,
    pinning_instance,
    random_2local_instance,
    save_instance,
)

OUT = Path(__file__).resolve().parent.parent / "src" / "qmtree" / "instances"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    save_instance(pinning_instance(4), OUT / "pinning_4q.json")
    # Deliberately shipped with the wide (0.1, 0.9) promise: its per-term
    # ground energy of exactly 1/2 sits at the repetition threshold, which is
    # what the threshold-caveat experiments demonstrate.
    save_instance(frustrated_instance(4), OUT / "frustrated_4q.json")
    save_instance(calibrated_no_instance(4), OUT / "calibrated_no_4q.json")
    for seed in range(1, 11):
        save_instance(random_2local_instance(6, 8, seed), OUT / f"random2local_6q_s{seed}.json")
    print(f"wrote {len(list(OUT.glob('*.json')))} instance files to {OUT}")


if __name__ == "__main__":
    main()
