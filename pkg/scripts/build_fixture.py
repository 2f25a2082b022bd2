#!/usr/bin/env python3
"""Build the bundled synthetic benchmark fixture and naive prior.

All numbers below are invented. They mimic the layout and rough shape of a
national mobility survey's published aggregates (demographic marginals plus
walking-preference shares by age group, including a small "not specified"
share) but correspond to no real dataset. The script is deterministic: the
emitted CSVs are byte-identical across runs, and each distribution's percent
column sums to exactly 100.00 by construction (the largest entry absorbs the
rounding residual).

Run from the repository root:

    python scripts/build_fixture.py
"""

from __future__ import annotations

import csv
from pathlib import Path

DATA_DIR = Path(__file__).resolve().parent.parent / "src" / "persona_synth" / "data"

# --- benchmark fixture -------------------------------------------------------

BENCHMARK_MARGINALS: dict[str, list[tuple[str, float]]] = {
    "Age Group": [
        ("14--17", 6.1), ("18--29", 13.8), ("30--39", 14.2), ("40--49", 13.1),
        ("50--59", 15.3), ("60--64", 8.7), ("65--74", 12.2), ("75--79", 8.9),
        ("80+", 7.7),
    ],
    # includes a "not specified" share, merged into the most popular category
    # at ingestion time
    "Education Level": [
        ("No Degree (yet)", 7.9), ("Low", 28.3), ("Medium", 34.6), ("High", 27.1),
        ("not specified", 2.1),
    ],
    "Main Activity": [
        ("Full-time employee", 33.4), ("Part-time employee", 11.8),
        ("Employed (unspecified)", 4.1), ("Pupil", 7.6), ("Student", 4.9),
        ("Housewife/Househusband", 6.2), ("Pensioner", 26.3), ("Other", 5.7),
    ],
    "Economic Status": [
        ("Very Low", 8.8), ("Low", 20.4), ("Medium", 38.1), ("High", 23.6),
        ("Very High", 9.1),
    ],
    "Household Type": [
        ("Young singles", 5.8), ("Middle-aged singles", 8.3), ("Older singles", 10.2),
        ("Young two-person households", 6.1),
        ("Middle-aged two-person households", 10.4),
        ("Older two-person households", 15.7),
        ("Households with at least 3 adults", 9.3),
        ("Households with at least 1 child under 6", 8.9),
        ("Households with at least 1 child under 14", 9.6),
        ("Households with at least 1 child under 18", 8.1),
        ("Single parents", 7.6),
    ],
}

WALKING_RESPONSES = [
    "Completely Agree", "Rather Agree", "Partly Agree", "Rather Disagree",
    "Completely Disagree", "not specified",
]

# Agreement tapers off with age; "not specified" keeps a small share so the
# merge path is exercised on every row.
WALKING_BY_AGE: list[tuple[str, list[float]]] = [
    ("14--17", [34.2, 26.8, 19.6, 11.3, 6.0, 2.1]),
    ("18--29", [32.9, 26.7, 20.1, 12.2, 6.2, 1.9]),
    ("30--39", [31.1, 26.2, 20.8, 13.0, 6.8, 2.1]),
    ("40--49", [29.3, 25.7, 21.2, 13.9, 7.8, 2.1]),
    ("50--59", [27.2, 25.1, 21.8, 14.8, 9.0, 2.1]),
    ("60--64", [25.0, 24.1, 22.3, 16.1, 10.4, 2.1]),
    ("65--74", [22.8, 23.2, 22.4, 17.6, 11.9, 2.1]),
    ("75--79", [20.3, 22.1, 22.8, 19.0, 13.7, 2.1]),
    ("80+", [17.9, 20.9, 23.1, 20.1, 15.9, 2.1]),
]

# --- naive prior -------------------------------------------------------------
# Deliberately offset from the benchmark: this stands in for "general
# demographic knowledge" so the naive tiers run without any benchmark file.

PRIOR_MARGINALS: dict[str, list[tuple[str, float]]] = {
    "Age Group": [
        ("14--17", 5.0), ("18--29", 16.0), ("30--39", 15.0), ("40--49", 14.0),
        ("50--59", 14.0), ("60--64", 8.0), ("65--74", 13.0), ("75--79", 7.0),
        ("80+", 8.0),
    ],
    "Education Level": [
        ("No Degree (yet)", 10.0), ("Low", 30.0), ("Medium", 34.0), ("High", 26.0),
    ],
    "Main Activity": [
        ("Full-time employee", 35.0), ("Part-time employee", 11.0),
        ("Employed (unspecified)", 5.0), ("Pupil", 7.0), ("Student", 6.0),
        ("Housewife/Househusband", 5.0), ("Pensioner", 25.0), ("Other", 6.0),
    ],
    "Economic Status": [
        ("Very Low", 10.0), ("Low", 22.0), ("Medium", 36.0), ("High", 22.0),
        ("Very High", 10.0),
    ],
    "Household Type": [
        ("Young singles", 7.0), ("Middle-aged singles", 8.0), ("Older singles", 9.0),
        ("Young two-person households", 7.0),
        ("Middle-aged two-person households", 10.0),
        ("Older two-person households", 15.0),
        ("Households with at least 3 adults", 9.0),
        ("Households with at least 1 child under 6", 9.0),
        ("Households with at least 1 child under 14", 9.0),
        ("Households with at least 1 child under 18", 9.0),
        ("Single parents", 8.0),
    ],
}


def exact_percent(values: list[float]) -> list[float]:
    """Round to 2 decimals and push the residual into the largest entry so the
    published column sums to exactly 100.00."""
    rounded = [round(v, 2) for v in values]
    residual = round(100.0 - sum(rounded), 2)
    rounded[rounded.index(max(rounded))] += residual
    total = round(sum(rounded), 2)
    assert total == 100.0, f"column sums to {total}"
    return [round(v, 2) for v in rounded]


def write_benchmark(path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# Synthetic benchmark fixture: invented numbers in the layout of a\n")
        fh.write("# national mobility survey's published aggregates. Not real data.\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["kind", "attribute", "category", "question", "response", "share_percent"]
        )
        for attribute, pairs in BENCHMARK_MARGINALS.items():
            labels = [label for label, _ in pairs]
            shares = exact_percent([share for _, share in pairs])
            for label, share in zip(labels, shares):
                writer.writerow(["marginal", attribute, label, "", "", f"{share:.2f}"])
        for age, raw in WALKING_BY_AGE:
            shares = exact_percent(raw)
            for response, share in zip(WALKING_RESPONSES, shares):
                writer.writerow(
                    ["response", "Age Group", age, "walking", response, f"{share:.2f}"]
                )


def write_prior(path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# Synthetic prior marginals standing in for general demographic\n")
        fh.write("# knowledge. Invented numbers; not real data.\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["kind", "attribute", "category", "question", "response", "share_percent"]
        )
        for attribute, pairs in PRIOR_MARGINALS.items():
            labels = [label for label, _ in pairs]
            shares = exact_percent([share for _, share in pairs])
            for label, share in zip(labels, shares):
                writer.writerow(["marginal", attribute, label, "", "", f"{share:.2f}"])


def main() -> None:
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    write_benchmark(DATA_DIR / "benchmark_fixture.csv")
    write_prior(DATA_DIR / "naive_prior.csv")
    print(f"wrote fixtures to {DATA_DIR}")


if __name__ == "__main__":
    main()
