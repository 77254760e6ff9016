"""Convert the UCI splice-junction data shipped in the ``keel-ds`` wheel to CSV.

Usage::

    pip download --no-deps keel-ds -d /tmp/keel
    python scripts/convert_splice.py /tmp/keel/keel_ds-*.whl data/splice.csv

Nucleotides are encoded A=1, C=2, G=3, T=4; ambiguity codes (D, N, R, S)
become 0. Junction classes EI and IE map to +1, the "neither" class N to -1.
"""
import sys
import zipfile

CODES = {"A": 1, "C": 2, "G": 3, "T": 4}
LABELS = {"EI": 1, "IE": 1, "N": -1}


def main(wheel, out):
    raw = zipfile.ZipFile(wheel).read("keel_ds/data/balanced/raw/splice.dat").decode()
    with open(out, "w") as fh:
        for line in raw.splitlines():
            parts = [p.strip() for p in line.split(",")]
            if len(parts) < 2:
                continue
            feats = [str(CODES.get(p, 0)) for p in parts[:-1]]
            fh.write(",".join(feats + [str(LABELS[parts[-1]])]) + "\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
