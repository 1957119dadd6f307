"""Color literal parsing and exact sRGB / CIE Lab math.

All Lab math is fixed to the D65 reference white (2-degree observer) with
the IEC 61966-2-1 sRGB primaries. Quantization to 8 bits rounds half-to-even
so results are platform independent.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

# D65 reference white, 2-degree observer
_XN, _YN, _ZN = 0.95047, 1.0, 1.08883

# linear sRGB -> XYZ (IEC 61966-2-1), rows renormalized so that linear
# white (1,1,1) maps exactly onto the reference white; the published
# 7-digit row 2 sums to 1.0000001, which would push L(white) past 100 and
# (100,0,0) fractionally outside the gamut test
_RGB2XYZ_RAW = (
    (0.4124564, 0.3575761, 0.1804375),
    (0.2126729, 0.7151522, 0.0721750),
    (0.0193339, 0.1191920, 0.9503041),
)
_RGB2XYZ = tuple(
    tuple(v * white / sum(row) for v in row)
    for row, white in zip(_RGB2XYZ_RAW, (_XN, _YN, _ZN))
)
def _inv3(m):
    # exact-inverse of the forward matrix keeps 8-bit round trips inside the
    # 1e-9 gamut epsilon; the published 7-digit XYZ->RGB constants do not
    (a, b, c), (d, e, f), (g, h, i) = m
    det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
    return (
        ((e * i - f * h) / det, (c * h - b * i) / det, (b * f - c * e) / det),
        ((f * g - d * i) / det, (a * i - c * g) / det, (c * d - a * f) / det),
        ((d * h - e * g) / det, (b * g - a * h) / det, (a * e - b * d) / det),
    )


_XYZ2RGB = _inv3(_RGB2XYZ)

_EPS = (6.0 / 29.0) ** 3  # t threshold in the CIE f(t) function
_KAPPA = (29.0 / 6.0) ** 2 / 3.0  # slope of the linear branch

GAMUT_EPS = 1e-9


@dataclass(frozen=True)
class Rgb8:
    r: int
    g: int
    b: int

    def __post_init__(self):
        for ch in (self.r, self.g, self.b):
            if not (isinstance(ch, int) and 0 <= ch <= 255):
                raise ValueError(f"channel out of range: {ch!r}")


@dataclass(frozen=True)
class LabColor:
    L: float
    a: float
    b: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.L, self.a, self.b)):
            raise ValueError("non-finite Lab component")

    def as_tuple(self):
        return (self.L, self.a, self.b)


_HEX_RE = re.compile(r"#([0-9a-fA-F]{6})\Z")
_RGB_RE = re.compile(
    r"rgb\(\s*([0-9]{1,3})\s*,\s*([0-9]{1,3})\s*,\s*([0-9]{1,3})\s*\)\Z",
    re.IGNORECASE,
)


def parse_color(text):
    """Parse a whole string as a 6-digit hex or rgb(r,g,b) literal.

    Returns (format_tag, Rgb8) or None. format_tag is "hex" or "rgb".
    """
    m = _HEX_RE.match(text)
    if m:
        h = m.group(1)
        return ("hex", Rgb8(int(h[0:2], 16), int(h[2:4], 16), int(h[4:6], 16)))
    m = _RGB_RE.match(text)
    if m:
        vals = [int(g) for g in m.groups()]
        if any(v > 255 for v in vals):
            return None
        return ("rgb", Rgb8(*vals))
    return None


def _srgb_decompand(u):
    # inverse companding: 8-bit channel in [0,1] -> linear light
    if u <= 0.04045:
        return u / 12.92
    return ((u + 0.055) / 1.055) ** 2.4


def _srgb_compand(u):
    if u <= 0.04045 / 12.92:
        return u * 12.92
    return 1.055 * u ** (1.0 / 2.4) - 0.055


def _f(t):
    if t > _EPS:
        return t ** (1.0 / 3.0)
    return _KAPPA * t + 4.0 / 29.0


def _finv(t):
    if t > 6.0 / 29.0:
        return t ** 3
    return (t - 4.0 / 29.0) / _KAPPA


def srgb_to_lab(c: Rgb8) -> LabColor:
    lin = [_srgb_decompand(ch / 255.0) for ch in (c.r, c.g, c.b)]
    x = sum(m * v for m, v in zip(_RGB2XYZ[0], lin))
    y = sum(m * v for m, v in zip(_RGB2XYZ[1], lin))
    z = sum(m * v for m, v in zip(_RGB2XYZ[2], lin))
    fx, fy, fz = _f(x / _XN), _f(y / _YN), _f(z / _ZN)
    return LabColor(116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))


def _round_half_even(x):
    return int(round(x))  # python 3 banker's rounding


def lab_to_srgb(c: LabColor):
    """Inverse of srgb_to_lab.

    Returns (linear_rgb triple, clipped Rgb8, in_gamut flag). The flag is
    true iff all linear channels are in [0-eps, 1+eps], eps = 1e-9.
    """
    fy = (c.L + 16.0) / 116.0
    fx = fy + c.a / 500.0
    fz = fy - c.b / 200.0
    x, y, z = _finv(fx) * _XN, _finv(fy) * _YN, _finv(fz) * _ZN
    lin = tuple(
        sum(m * v for m, v in zip(row, (x, y, z))) for row in _XYZ2RGB
    )
    in_gamut = all(-GAMUT_EPS <= v <= 1.0 + GAMUT_EPS for v in lin)
    chans = []
    for v in lin:
        v = min(1.0, max(0.0, v))
        chans.append(_round_half_even(_srgb_compand(v) * 255.0))
    return lin, Rgb8(*chans), in_gamut


def in_srgb_gamut(c: LabColor) -> bool:
    return lab_to_srgb(c)[2]


def delta_e_2000(c1: LabColor, c2: LabColor) -> float:
    """CIEDE2000 color difference, kL = kC = kH = 1."""
    L1, a1, b1 = c1.as_tuple()
    L2, a2, b2 = c2.as_tuple()

    C1 = math.hypot(a1, b1)
    C2 = math.hypot(a2, b2)
    Cbar = 0.5 * (C1 + C2)
    G = 0.5 * (1.0 - math.sqrt(Cbar ** 7 / (Cbar ** 7 + 25.0 ** 7)))
    a1p, a2p = (1.0 + G) * a1, (1.0 + G) * a2
    C1p = math.hypot(a1p, b1)
    C2p = math.hypot(a2p, b2)

    h1p = math.degrees(math.atan2(b1, a1p)) % 360.0 if (a1p or b1) else 0.0
    h2p = math.degrees(math.atan2(b2, a2p)) % 360.0 if (a2p or b2) else 0.0

    dLp = L2 - L1
    dCp = C2p - C1p

    if C1p * C2p == 0.0:
        dhp = 0.0
    else:
        dhp = h2p - h1p
        if dhp > 180.0:
            dhp -= 360.0
        elif dhp < -180.0:
            dhp += 360.0
    dHp = 2.0 * math.sqrt(C1p * C2p) * math.sin(math.radians(dhp) / 2.0)

    Lbp = 0.5 * (L1 + L2)
    Cbp = 0.5 * (C1p + C2p)
    if C1p * C2p == 0.0:
        hbp = h1p + h2p
    elif abs(h1p - h2p) <= 180.0:
        hbp = 0.5 * (h1p + h2p)
    elif h1p + h2p < 360.0:
        hbp = 0.5 * (h1p + h2p + 360.0)
    else:
        hbp = 0.5 * (h1p + h2p - 360.0)

    T = (1.0
         - 0.17 * math.cos(math.radians(hbp - 30.0))
         + 0.24 * math.cos(math.radians(2.0 * hbp))
         + 0.32 * math.cos(math.radians(3.0 * hbp + 6.0))
         - 0.20 * math.cos(math.radians(4.0 * hbp - 63.0)))
    d_theta = 30.0 * math.exp(-(((hbp - 275.0) / 25.0) ** 2))
    RC = 2.0 * math.sqrt(Cbp ** 7 / (Cbp ** 7 + 25.0 ** 7))
    SL = 1.0 + 0.015 * (Lbp - 50.0) ** 2 / math.sqrt(20.0 + (Lbp - 50.0) ** 2)
    SC = 1.0 + 0.045 * Cbp
    SH = 1.0 + 0.015 * Cbp * T
    RT = -math.sin(math.radians(2.0 * d_theta)) * RC

    return math.sqrt(
        (dLp / SL) ** 2
        + (dCp / SC) ** 2
        + (dHp / SH) ** 2
        + RT * (dCp / SC) * (dHp / SH)
    )


class NamedColorTable:
    """Immutable name -> Lab table with nearest-by-deltaE lookup."""

    def __init__(self, entries):
        names = [n for n, _ in entries]
        if len(set(names)) != len(names):
            raise ValueError("duplicate color names")
        self.entries = list(entries)

    def __len__(self):
        return len(self.entries)

    @classmethod
    def load(cls, path):
        """Load `name<TAB>L<TAB>a<TAB>b` lines; '#' starts a comment line."""
        entries = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 4:
                    raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields")
                name, L, a, b = parts
                entries.append((name, LabColor(float(L), float(a), float(b))))
        return cls(entries)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for name, lab in self.entries:
                fh.write(f"{name}\t{lab.L!r}\t{lab.a!r}\t{lab.b!r}\n")


def nearest_named(c: LabColor, table: NamedColorTable):
    """Nearest table entry by deltaE2000; ties go to the smaller name."""
    if len(table) == 0:
        raise ValueError("empty vocabulary")
    best = None
    for name, lab in table.entries:
        de = delta_e_2000(c, lab)
        if best is None or de < best[1] or (de == best[1] and name < best[0]):
            best = (name, de)
    return best
