#!/usr/bin/env python3
"""Write the High School and Beyond math achievement data to data/hsb.csv.

The pupil file (nlme::MathAchieve) is merged with the school file
(nlme::MathAchSchool) to attach each school's sector. Both come from the
`rdatasets` package (`pip install rdatasets`), which bundles the R dataset
collection and needs no network access once installed.

The alcohol-use panel (alcohol1_pp, 82 adolescents in 3 waves) is not in
that collection. Obtain it from the companion material of Singer and
Willett's longitudinal data analysis text and save it as data/alcohol.csv
with columns id, age, coa, alcuse, peer.
"""

import argparse
import pathlib

import rdatasets


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--out",
        type=pathlib.Path,
        default=pathlib.Path(__file__).resolve().parent.parent / "data",
        help="output directory (default: data/ next to this script's parent)",
    )
    args = parser.parse_args()

    pupils = rdatasets.data("nlme", "MathAchieve").drop(columns="rownames")
    schools = rdatasets.data("nlme", "MathAchSchool")[["School", "Sector"]]
    hsb = pupils.merge(schools, on="School", how="left", validate="many_to_one")
    if hsb["Sector"].isna().any():
        raise SystemExit("some pupils have no matching school record")

    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "hsb.csv"
    hsb.to_csv(path, index=False)
    print(f"wrote {path}: {len(hsb)} pupils in {hsb['School'].nunique()} schools")


if __name__ == "__main__":
    main()
