"""Canonical layout of the 115-column feature vector.

Five stream families, each tracked at five decay rates (lambda), each
contributing three one-stream statistics or seven two-stream statistics:

* ``MI_dir``  keyed by (src_mac, src_ip), value = frame length   (3 stats)
* ``H``       keyed by src_ip, value = frame length              (3 stats)
* ``HH``      keyed by (src_ip, dst_ip), value = frame length    (7 stats)
* ``HH_jit``  keyed by (src_ip, dst_ip), value = inter-arrival   (3 stats)
* ``HpHp``    keyed by the socket 4-tuple, value = frame length  (7 stats)

Columns are family-major, lambda-minor, statistic-minor; 23 statistics
times 5 lambdas = 115 columns.
"""

from __future__ import annotations

LAMBDAS = (5.0, 3.0, 1.0, 0.1, 0.01)

STATS_1D = ("weight", "mean", "std")
STATS_2D = (
    "weight_0",
    "mean_0",
    "std_0",
    "radius_0_1",
    "magnitude_0_1",
    "covariance_0_1",
    "pcc_0_1",
)

FAMILIES = (
    ("MI_dir", STATS_1D),
    ("H", STATS_1D),
    ("HH", STATS_2D),
    ("HH_jit", STATS_1D),
    ("HpHp", STATS_2D),
)


def _lambda_tag(lam: float) -> str:
    return "%g" % lam


def _build_names() -> tuple[str, ...]:
    names = []
    for family, stats in FAMILIES:
        for lam in LAMBDAS:
            for stat in stats:
                names.append("%s_%s_%s" % (family, _lambda_tag(lam), stat))
    return tuple(names)


FEATURE_NAMES: tuple[str, ...] = _build_names()
N_FEATURES = len(FEATURE_NAMES)

assert N_FEATURES == 115

# Start offset of each family block within a row.
FAMILY_OFFSETS = {}
_off = 0
for _family, _stats in FAMILIES:
    FAMILY_OFFSETS[_family] = _off
    _off += len(LAMBDAS) * len(_stats)
