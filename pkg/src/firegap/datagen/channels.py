"""Raw 23-channel table and the 42-channel encoded layout."""

import hashlib
import json
from dataclasses import asdict, dataclass

# name, category, unit, min, max, mean (Table I of the WSTS statistics; mean None where undefined)
RAW_CHANNELS = (
    ("m11", "measurement", "-", -100.0, 16000.0, 1908.53),
    ("i2", "measurement", "-", -100.0, 15998.0, 2944.98),
    ("i1", "measurement", "-", -100.0, 15997.0, 1820.32),
    ("ndvi", "measurement", "-", -9966.0, 9995.0, 4323.21),
    ("evi2", "measurement", "-", -5172.0, 9998.0, 2221.04),
    ("precip", "measurement", "mm", 0.0, 145.3, 0.50),
    ("wind_speed", "measurement", "m/s", 0.3, 16.2, 3.49),
    ("wind_dir", "measurement", "deg", 0.0, 360.0, 222.40),
    ("tmin", "measurement", "K", 242.0, 311.8, 283.06),
    ("tmax", "measurement", "K", 254.7, 325.4, 299.47),
    ("erc", "measurement", "-", 0.0, 122.0, 68.96),
    ("sph", "measurement", "kg/kg", 0.0, 0.02, 0.01),
    ("slope", "measurement", "deg", 0.0, 67.07, 7.21),
    ("aspect", "measurement", "deg", 0.0, 359.89, 175.43),
    ("elevation", "measurement", "m", -84.0, 4350.0, 1487.21),
    ("pdsi", "measurement", "-", -13.75, 9.66, -2.02),
    ("land_cover", "land_cover", "id", 1.0, 17.0, None),
    ("fc_precip", "forecast", "mm", 0.0, 1144.81, 9.09),
    ("fc_wind_speed", "forecast", "m/s", 0.0, 14.30, 1.58),
    ("fc_wind_dir", "forecast", "deg", -89.99, 89.99, 6.15),
    ("fc_temp", "forecast", "C", -17.04, 39.51, 18.58),
    ("fc_sph", "forecast", "kg/kg", 0.0, 0.01, 0.01),
    ("active_fire", "fire", "HHMM", 742.0, 2218.0, None),
)
RAW_NAMES = tuple(c[0] for c in RAW_CHANNELS)
RAW_INDEX = {n: i for i, n in enumerate(RAW_NAMES)}
N_RAW = len(RAW_CHANNELS)

ANGULAR = ("wind_dir", "aspect")

LAND_COVER_CLASSES = (
    "Evergreen Needleleaf Forests",
    "Evergreen Broadleaf Forests",
    "Deciduous Needleleaf Forests",
    "Deciduous Broadleaf Forests",
    "Mixed Forests",
    "Closed Shrublands",
    "Open Shrublands",
    "Woody Savannas",
    "Savannas",
    "Grasslands",
    "Permanent Wetlands",
    "Croplands",
    "Urban and Built-up Lands",
    "Cropland/Natural Vegetation Mosaics",
    "Permanent Snow and Ice",
    "Barren",
    "Water Bodies",
)
N_LAND_COVER = len(LAND_COVER_CLASSES)

FIRE_CHANNEL = 41
N_ENCODED = 42
CODEBOOK_VERSION = 1


@dataclass(frozen=True)
class ChannelEntry:
    name: str
    transform: str  # zscore | cyclical_sin | cyclical_cos | onehot | fire
    source: str
    mean: float = 0.0
    std: float = 1.0
    fire_derived: bool = False


def _layout():
    """Ordered (name, transform, source) triples for the 42 encoded channels."""
    out = []
    for name, cat, *_ in RAW_CHANNELS:
        if name in ANGULAR:
            out.append((f"{name}_sin", "cyclical_sin", name))
            out.append((f"{name}_cos", "cyclical_cos", name))
        elif cat == "land_cover":
            out.extend((f"lc_{i:02d}", "onehot", name) for i in range(1, N_LAND_COVER + 1))
        elif cat == "fire":
            # detection time, z-scored over detected pixels; missing -> 0
            out.append(("fire_time", "zscore", name))
        else:
            out.append((name, "zscore", name))
    out.append(("fire", "fire", "active_fire"))
    return out


LAYOUT = tuple(_layout())
ENCODED_NAMES = tuple(n for n, _, _ in LAYOUT)
FIRE_TIME_CHANNEL = ENCODED_NAMES.index("fire_time")
# channels touched by the corruption operator
FIRE_DERIVED = (FIRE_TIME_CHANNEL, FIRE_CHANNEL)
ENV_CHANNELS = tuple(i for i in range(N_ENCODED) if i not in FIRE_DERIVED)


@dataclass(frozen=True)
class ChannelCodebook:
    entries: tuple

    def __post_init__(self):
        tags = [e.transform for e in self.entries]
        if len(self.entries) != N_ENCODED:
            raise ValueError(f"codebook needs {N_ENCODED} entries, got {len(self.entries)}")
        if tags.count("onehot") != 17 or tags.count("fire") != 1 or tags.count("zscore") != 20:
            raise ValueError("codebook transform counts violate the 20/4/17/1 layout")
        if tags.count("cyclical_sin") + tags.count("cyclical_cos") != 4:
            raise ValueError("codebook needs exactly 4 cyclical channels")

    @classmethod
    def from_stats(cls, stats):
        entries = []
        for name, tag, src in LAYOUT:
            mean, std = stats.get(src, (0.0, 1.0)) if tag == "zscore" else (0.0, 1.0)
            entries.append(ChannelEntry(name, tag, src, float(mean), float(std), src == "active_fire"))
        return cls(tuple(entries))

    @property
    def names(self):
        return tuple(e.name for e in self.entries)

    def to_json(self):
        return {"version": CODEBOOK_VERSION, "entries": [asdict(e) for e in self.entries]}

    @classmethod
    def from_json(cls, obj):
        if obj.get("version") != CODEBOOK_VERSION:
            raise ValueError(f"unsupported codebook version {obj.get('version')}")
        return cls(tuple(ChannelEntry(**e) for e in obj["entries"]))

    def hash(self):
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
