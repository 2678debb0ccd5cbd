"""Stochastic cellular-automaton fire events with WSTS-like environment channels."""

from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from firegap import kernels
from firegap.datagen.channels import N_RAW, RAW_CHANNELS, RAW_INDEX


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class FireSimConfig:
    height: int = 80
    width: int = 80
    days: int = 10
    ignitions: int = 2
    spread_base_prob: float = 0.2
    wind_coupling: float = 0.8
    fuel_coupling: float = 0.8
    slope_coupling: float = 0.4
    extinguish_prob: float = 0.3
    substeps: int = 2
    ignition_day: int = 0
    # day after which spread is damped and burnout accelerated (None: never)
    decay_day: int | None = None
    decay_spread_factor: float = 0.15
    decay_extinguish_boost: float = 0.5
    # amplitude of the active-fire thermal signature in the SWIR bands,
    # in units of the band's background spread
    heat_signal: float = 1.5
    scar_signal: float = 1.0
    band_noise: float = 0.6

    def validate(self):
        if self.height < 64 or self.width < 64:
            raise GenerationError(f"event grid must be at least 64x64, got {self.height}x{self.width}")
        if self.days < 7:
            raise GenerationError(f"events need at least 7 days, got {self.days}")
        if not 0 <= self.ignition_day < self.days:
            raise GenerationError("ignition_day outside the event")
        for name in ("spread_base_prob", "extinguish_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise GenerationError(f"{name}={v} outside [0, 1]")


@dataclass
class FireEvent:
    event_id: int
    group_id: int
    seed: int
    config: FireSimConfig
    raw: np.ndarray  # (days, 23, H, W) float32; active_fire is NaN where undetected
    fire: np.ndarray  # (days, H, W) uint8

    @property
    def days(self):
        return self.fire.shape[0]

    @property
    def grid(self):
        return self.fire.shape[1:]

    def meta(self):
        return {"event_id": self.event_id, "group_id": self.group_id, "seed": self.seed, "config": asdict(self.config)}


def event_rng(run_seed, event_id, purpose):
    """Independent stream per (run seed, event, purpose)."""
    tag = int.from_bytes(purpose.encode()[:8].ljust(8, b"\0"), "little")
    return np.random.default_rng([int(run_seed) & 0xFFFFFFFF, int(event_id), tag])


def smooth_field(rng, shape, sigma):
    z = gaussian_filter(rng.standard_normal(shape), sigma, mode="reflect")
    return (z - z.mean()) / (z.std() + 1e-12)


def _to_range(z, name):
    _, _, _, lo, hi, mean = RAW_CHANNELS[RAW_INDEX[name]]
    spread = min(mean - lo, hi - mean) / 3.0
    return np.clip(mean + spread * z, lo, hi)


def _spread_scale(name):
    _, _, _, lo, hi, mean = RAW_CHANNELS[RAW_INDEX[name]]
    return min(mean - lo, hi - mean) / 3.0


# land-cover ids favoured by fire-prone western US terrain
_LC_WEIGHTS = np.array([8, 1, 1, 2, 4, 5, 8, 6, 5, 8, 1, 3, 1, 2, 0.3, 2, 1], dtype=float)
_LC_FUEL = np.ones(17)
_LC_FUEL[[12, 14, 15, 16]] = (0.2, 0.05, 0.1, 0.0)  # urban, snow, barren, water (0-indexed)


def _static_fields(rng, h, w):
    elev_z = smooth_field(rng, (h, w), 10.0)
    elevation = _to_range(elev_z, "elevation")
    gy, gx = np.gradient(elevation, 375.0)
    slope = np.clip(np.degrees(np.arctan(np.hypot(gx, gy))) * 4.0, 0.0, 67.07)
    # aspect: compass direction the downslope faces (north = -y)
    aspect = np.mod(np.degrees(np.arctan2(-gx, gy)), 360.0)
    aspect = np.where(aspect >= 359.89, 0.0, aspect)
    classes = rng.choice(17, size=4, replace=False, p=_LC_WEIGHTS / _LC_WEIGHTS.sum())
    scores = np.stack([smooth_field(rng, (h, w), 8.0) for _ in classes])
    land_cover = (classes[np.argmax(scores, axis=0)] + 1).astype(float)
    ndvi_base = _to_range(0.6 + smooth_field(rng, (h, w), 6.0), "ndvi")
    fuel = np.clip((ndvi_base + 2000.0) / 9000.0, 0.05, 1.0) * _LC_FUEL[land_cover.astype(int) - 1]
    return elevation, slope, aspect, land_cover, ndvi_base, fuel


def _ignite(rng, cfg, fuel):
    h, w = fuel.shape
    burning = np.zeros((h, w), dtype=bool)
    cy = rng.integers(h // 3, 2 * h // 3)
    cx = rng.integers(w // 3, 2 * w // 3)
    for _ in range(cfg.ignitions):
        y = int(np.clip(cy + rng.integers(-8, 9), 1, h - 2))
        x = int(np.clip(cx + rng.integers(-8, 9), 1, w - 2))
        burning[y - 1:y + 1, x - 1:x + 1] = True
    return burning


def _spread_matrix(cfg, fuel, elevation, wind_dir, wind_speed, day_factor):
    h, w = fuel.shape
    pad_e = np.pad(elevation, 1, mode="edge")
    theta = np.radians(wind_dir)
    down_y, down_x = np.cos(theta), -np.sin(theta)
    pmat = np.empty((8, h, w))
    for d, (dy, dx) in enumerate(kernels.NEIGHBOUR_OFFSETS):
        dist = np.hypot(dy, dx)
        align = ((-dy) * down_y + (-dx) * down_x) / dist
        wind = np.exp(cfg.wind_coupling * (wind_speed / 5.0) * align)
        rise = (elevation - pad_e[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]) / (dist * 375.0)
        slope = np.exp(np.clip(cfg.slope_coupling * 10.0 * rise, -2.0, 2.0))
        fuel_term = (1.0 - cfg.fuel_coupling) + cfg.fuel_coupling * fuel
        pmat[d] = cfg.spread_base_prob * day_factor * wind * slope * fuel_term
    return np.clip(pmat, 0.0, 0.95)


def simulate_fire_event(seed, config=FireSimConfig(), event_id=0, group_id=0):
    """Run the CA for ``config.days`` days and synthesise the 23 raw channels."""
    cfg = config
    cfg.validate()
    h, w, days = cfg.height, cfg.width, cfg.days
    rng_env = event_rng(seed, event_id, "env")
    rng_fire = event_rng(seed, event_id, "fire")
    rng_det = event_rng(seed, event_id, "detect")

    elevation, slope, aspect, land_cover, ndvi_base, fuel = _static_fields(rng_env, h, w)
    base_dir = rng_env.uniform(0.0, 360.0)
    base_speed = rng_env.uniform(2.0, 7.0)

    raw = np.zeros((days, N_RAW, h, w), dtype=np.float32)
    fire = np.zeros((days, h, w), dtype=np.uint8)
    burning = np.zeros((h, w), dtype=bool)
    burned = np.zeros((h, w), dtype=bool)
    pdsi_z = smooth_field(rng_env, (h, w), 12.0)
    for d in range(days):
        dir_field = np.mod(base_dir + 20.0 * d * rng_env.uniform(-1, 1) + 10.0 * smooth_field(rng_env, (h, w), 12.0), 360.0)
        speed_field = np.clip(base_speed + rng_env.normal(0, 1.0) + 0.8 * smooth_field(rng_env, (h, w), 12.0), 0.3, 16.2)
        rainy = rng_env.random() < 0.1
        precip = np.clip((4.0 if rainy else 0.1) * np.exp(0.7 * smooth_field(rng_env, (h, w), 10.0)), 0.0, 145.3)
        day_factor = 0.4 if rainy else 1.0
        extinguish = cfg.extinguish_prob
        if cfg.decay_day is not None and d > cfg.decay_day:
            day_factor *= cfg.decay_spread_factor
            extinguish = extinguish + (1.0 - extinguish) * cfg.decay_extinguish_boost

        if d == cfg.ignition_day:
            burning |= _ignite(rng_fire, cfg, fuel) & ~burned
        fire[d] = burning
        burned |= burning

        ch = raw[d]
        day_z = rng_env.normal(0.0, 0.5)
        heat = gaussian_filter(burning.astype(float), 1.0)
        heat = heat / max(heat.max(), 1e-12) if burning.any() else heat
        for name, boost in (("m11", cfg.heat_signal), ("i2", 0.5 * cfg.heat_signal), ("i1", 0.2 * cfg.heat_signal)):
            z = 0.8 * smooth_field(rng_env, (h, w), 5.0) + cfg.band_noise * rng_env.standard_normal((h, w))
            z = z + boost * 3.0 * heat - 0.5 * cfg.scar_signal * burned
            ch[RAW_INDEX[name]] = _to_range(z, name)
        scar = cfg.scar_signal * 3000.0 * gaussian_filter(burned.astype(float), 0.7)
        ndvi = ndvi_base - scar + 0.3 * cfg.band_noise * _spread_scale("ndvi") * rng_env.standard_normal((h, w))
        ch[RAW_INDEX["ndvi"]] = np.clip(ndvi, -9966.0, 9995.0)
        evi_z = (ndvi - 4323.21) / _spread_scale("ndvi")
        ch[RAW_INDEX["evi2"]] = _to_range(evi_z, "evi2")
        ch[RAW_INDEX["precip"]] = precip
        ch[RAW_INDEX["wind_speed"]] = speed_field
        ch[RAW_INDEX["wind_dir"]] = np.where(dir_field >= 360.0, 0.0, dir_field)
        temp_z = smooth_field(rng_env, (h, w), 15.0) * 0.5 + day_z - 0.3 * (elevation - 1487.21) / 500.0
        ch[RAW_INDEX["tmin"]] = _to_range(temp_z, "tmin")
        ch[RAW_INDEX["tmax"]] = _to_range(temp_z + 0.3, "tmax")
        ch[RAW_INDEX["erc"]] = _to_range(0.5 * smooth_field(rng_env, (h, w), 10.0) + day_z + 0.5 * (fuel - 0.5), "erc")
        ch[RAW_INDEX["sph"]] = _to_range(-day_z + 0.5 * smooth_field(rng_env, (h, w), 15.0), "sph")
        ch[RAW_INDEX["slope"]] = slope
        ch[RAW_INDEX["aspect"]] = aspect
        ch[RAW_INDEX["elevation"]] = elevation
        ch[RAW_INDEX["pdsi"]] = _to_range(pdsi_z + 0.1 * d * day_z, "pdsi")
        ch[RAW_INDEX["land_cover"]] = land_cover
        ch[RAW_INDEX["fc_precip"]] = _to_range(np.log1p(precip) + 0.3 * smooth_field(rng_env, (h, w), 10.0), "fc_precip")
        ch[RAW_INDEX["fc_wind_speed"]] = _to_range((speed_field - 3.49) / 1.5, "fc_wind_speed")
        ch[RAW_INDEX["fc_wind_dir"]] = _to_range(np.sin(np.radians(dir_field)) + 0.2 * day_z, "fc_wind_dir")
        ch[RAW_INDEX["fc_temp"]] = _to_range(temp_z, "fc_temp")
        ch[RAW_INDEX["fc_sph"]] = _to_range(-day_z, "fc_sph")
        det = np.full((h, w), np.nan)
        n_fire = int(burning.sum())
        if n_fire:
            det[burning] = np.clip(rng_det.normal(1330.0, 250.0, size=n_fire), 742.0, 2218.0)
        ch[RAW_INDEX["active_fire"]] = det

        # advance to the next day
        if d + 1 < days:
            start = burning.copy()
            for _ in range(cfg.substeps):
                pmat = _spread_matrix(cfg, fuel, elevation, dir_field, speed_field, day_factor)
                u = rng_fire.random((h, w))
                new = kernels.spread_step(burning, ~burning & ~burned, pmat, u)
                burning = burning | new
                burned |= new
            out = start & (rng_fire.random((h, w)) < extinguish)
            burning = burning & ~out
    return FireEvent(event_id, group_id, int(seed), cfg, raw, fire)


def sample_event_config(rng, base=FireSimConfig()):
    """Per-event variation used by dataset generation."""
    days = base.days
    decay = int(rng.integers(2, days - 1)) if rng.random() < 0.6 else None
    return replace(
        base,
        ignitions=int(rng.integers(1, 4)),
        spread_base_prob=float(rng.uniform(0.12, 0.32)),
        extinguish_prob=float(rng.uniform(0.15, 0.5)),
        ignition_day=int(rng.integers(0, min(7, days - 1))),
        decay_day=decay,
    )
