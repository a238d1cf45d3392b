"""Convert raw UCI downloads into the header-row CSVs the loader expects.

    python scripts/prepare_datasets.py credit-risk  german.data           data/credit_risk/credit_risk.csv
    python scripts/prepare_datasets.py online       online_shoppers_intention.csv data/online_shoppers/online_shoppers.csv
    python scripts/prepare_datasets.py biodeg       biodeg.csv            data/biodeg/biodeg.csv

No network access is attempted; fetch the raw files yourself (see data/README.md).
"""

import argparse
import csv
import shutil
from pathlib import Path

GERMAN_COLUMNS = [
    "checking_status", "duration", "credit_history", "purpose", "credit_amount", "savings_status",
    "employment", "installment_commitment", "personal_status", "other_parties", "residence_since",
    "property_magnitude", "age", "other_payment_plans", "housing", "existing_credits", "job",
    "num_dependents", "own_telephone", "foreign_worker", "class",
]

BIODEG_COLUMNS = [
    "SpMax_L", "J_Dz(e)", "nHM", "F01[N-N]", "F04[C-N]", "NssssC", "nCb-", "C%", "nCp", "nO",
    "F03[C-N]", "SdssC", "HyWi_B(m)", "LOC", "SM6_L", "F03[C-O]", "Me", "Mi", "nN-N", "nArNO2",
    "nCRX3", "SpPosA_B(p)", "nCIR", "B01[C-Br]", "B03[C-Cl]", "N-073", "SpMax_A", "Psi_i_1d",
    "B04[C-Br]", "SdO", "TI2_L", "nCrt", "C-026", "F02[C-N]", "nHDon", "SpMax_B(m)", "Psi_i_A",
    "nN", "SM6_B(m)", "nArCOOR", "nX", "experimental class",
]


def credit_risk(src: Path, dst: Path) -> int:
    rows = [line.split() for line in src.read_text().splitlines() if line.strip()]
    with dst.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GERMAN_COLUMNS)
        for r in rows:
            if len(r) != len(GERMAN_COLUMNS):
                raise SystemExit(f"expected {len(GERMAN_COLUMNS)} fields, got {len(r)}: {r}")
            r[-1] = {"1": "good", "2": "bad"}[r[-1]]
            w.writerow(r)
    return len(rows)


def biodeg(src: Path, dst: Path) -> int:
    # The UCI file is semicolon separated and has no header.
    with src.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh, delimiter=";") if r]
    with dst.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BIODEG_COLUMNS)
        w.writerows(rows)
    return len(rows)


def online(src: Path, dst: Path) -> int:
    shutil.copyfile(src, dst)  # already a headed CSV
    with dst.open(encoding="utf-8") as fh:
        return sum(1 for _ in fh) - 1


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("dataset", choices=["credit-risk", "online", "biodeg"])
    p.add_argument("src", type=Path)
    p.add_argument("dst", type=Path)
    a = p.parse_args()
    a.dst.parent.mkdir(parents=True, exist_ok=True)
    n = {"credit-risk": credit_risk, "online": online, "biodeg": biodeg}[a.dataset](a.src, a.dst)
    print(f"wrote {n} rows to {a.dst}")


if __name__ == "__main__":
    main()
