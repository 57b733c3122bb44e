import csv
from typing import Iterable, Sequence


def format_float(value: float) -> str:
    """
    17 significant digits, enough for a bit-exact round trip of a float64.
    """
    return f"{float(value):.17g}"


def write_rows(path: str, header: Sequence[str], rows: Iterable[Sequence]):
    """
    Write a CSV file. Floats are written with 17 significant digits, everything else with str().
    :param path: Output path.
    :param header: Column names.
    :param rows: Row tuples.
    """
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, float) else str(v) for v in row])


def read_rows(path: str):
    """
    Read a CSV file written by write_rows.
    :return: (header, rows) with rows as lists of strings.
    """
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [row for row in reader]
    return header, rows
