import argparse
import csv
import os


def parser(description, default_out):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out-dir", default=default_out)
    p.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    return p


def seeds(text):
    return [int(s) for s in text.split(",") if s.strip()]


def write_rows(path, columns, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {path}")
