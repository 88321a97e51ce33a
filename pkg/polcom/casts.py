import re
import typing

from .CoverError import ValidationError


_DECIMAL = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def mask_from_indices(indices: typing.Iterable[int]) -> int:
    v = 0
    for i in indices:
        v |= 1 << i
    return v


def indices_from_mask(v: int) -> typing.List[int]:
    r = []
    i = 0
    while v:
        if v & 1:
            r.append(i)
        v >>= 1
        i += 1
    return r


def popcount(v: int) -> int:
    """
    Return the number of set bits, i.e. the size of the index set `v` encodes.
    """
    return bin(v).count("1")


def float_from_text(text: str) -> float:
    # decimal point only; locale separators, hex floats, nan and inf are refused
    s = text.strip()
    if not _DECIMAL.match(s):
        raise ValidationError("not a decimal number: %r" % text)
    return float(s)


def float_to_text(v: float) -> str:
    # 17 significant digits round-trip every binary64 value
    return format(float(v), ".17g")
