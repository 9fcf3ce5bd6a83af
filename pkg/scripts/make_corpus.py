"""Write a small character-level corpus for the sample configs.

The text is a repeated pangram with light variation so there is real
structure to memorize but the file stays trivially small.
"""

import argparse
import pathlib

SENTENCES = [
    "the quick brown fox jumps over the lazy dog. ",
    "pack my box with five dozen liquor jugs. ",
    "how vexingly quick daft zebras jump. ",
    "sphinx of black quartz, judge my vow. ",
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("path", type=pathlib.Path, help="output text file")
    parser.add_argument("--repeats", type=int, default=12, help="passes over the sentence list")
    args = parser.parse_args()

    text = "".join(SENTENCES * args.repeats)
    args.path.parent.mkdir(parents=True, exist_ok=True)
    args.path.write_text(text)
    print(f"wrote {len(text)} characters ({len(set(text))} distinct) to {args.path}")


if __name__ == "__main__":
    main()
