# On-disk formats. Everything is UTF-8 with LF line endings.
#
# JSON documents are written with sorted keys and a trailing newline, so the
# same object always produces the same bytes and `file_digest` can be used to
# compare runs. CSV floats use 17 significant digits and survive a round trip
# through `float`.
import csv
import hashlib
import json
import pathlib
import typing

from .casts import float_to_text
from .CoverError import ParseError, ValidationError


DIGEST_CHUNK = 1 << 16


def utf8_problem(ex: UnicodeDecodeError) -> str:
    return "not valid UTF-8 text (byte 0x%02x)" % ex.object[ex.start]


def read_json(path) -> typing.Any:
    path = pathlib.Path(path)
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise ParseError("no such file", path=path)
    except json.JSONDecodeError as ex:
        raise ParseError("invalid JSON: %s" % ex, path=path, row=ex.lineno)
    except UnicodeDecodeError as ex:
        raise ParseError(utf8_problem(ex), path=path)


def json_text(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(doc, path) -> None:
    try:
        text = json_text(doc)
    except ValueError as ex:
        raise ValidationError("cannot write %s: %s" % (path, ex), doc)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return float_to_text(v)
    return str(v)


def write_csv(path, header: typing.Sequence[str], rows: typing.Iterable[typing.Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValidationError("row has %d cells, header %d" % (len(row), len(header)), row)
            writer.writerow([_cell(v) for v in row])


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(DIGEST_CHUNK), b""):
            h.update(chunk)
    return h.hexdigest()


def save_cover(solution, path) -> None:
    write_json(solution.to_dict(), path)


def load_cover(path):
    from .cover_core import CoverSolution

    doc = read_json(path)
    try:
        return CoverSolution.from_dict(doc)
    except ValidationError as ex:
        raise ParseError(str(ex), path=path)


def save_trace(solution, path) -> None:
    write_csv(
        path,
        ["iteration", "soft_objective", "covered_count"],
        [(it, float(soft), hard) for it, soft, hard in solution.trace],
    )
