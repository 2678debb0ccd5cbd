"""Dataset assembly: events -> encoded, cropped samples with event-level splits."""

from dataclasses import asdict, dataclass, field

import numpy as np

from firegap.datagen.channels import FIRE_CHANNEL, N_ENCODED, ChannelCodebook
from firegap.datagen.encode import (
    HISTORY,
    SCENARIOS,
    WINDOW,
    SampleSequence,
    adaptive_crop,
    compute_stats,
    encode_features,
)
from firegap.datagen.simulate import (
    FireSimConfig,
    GenerationError,
    event_rng,
    sample_event_config,
    simulate_fire_event,
)
from firegap.gradcore.tensor import ConfigError


class SampleSet:
    """Column store of encoded samples; indexing returns :class:`SampleSequence` views."""

    def __init__(self, inputs, targets, scenarios, origins, event_ids, group_ids, days, codebook, meta=None):
        self.inputs = inputs
        self.targets = targets
        self.scenarios = list(scenarios)
        self.origins = [tuple(int(v) for v in o) for o in origins]
        self.event_ids = np.asarray(event_ids, dtype=np.int64)
        self.group_ids = np.asarray(group_ids, dtype=np.int64)
        self.days = np.asarray(days, dtype=np.int64)
        self.codebook = codebook
        self.meta = dict(meta or {})

    @classmethod
    def from_samples(cls, samples, codebook, meta=None):
        n = len(samples)
        inputs = np.zeros((n, HISTORY, N_ENCODED, WINDOW, WINDOW), dtype=np.float32)
        targets = np.zeros((n, WINDOW, WINDOW), dtype=np.uint8)
        for i, s in enumerate(samples):
            inputs[i] = s.inputs
            targets[i] = s.target
        return cls(
            inputs, targets, [s.scenario for s in samples], [s.origin for s in samples],
            [s.event_id for s in samples], [s.group_id for s in samples], [s.t for s in samples], codebook, meta,
        )

    def __len__(self):
        return len(self.scenarios)

    def __getitem__(self, i):
        return SampleSequence(
            self.inputs[i], self.targets[i], self.scenarios[i], self.origins[i],
            int(self.event_ids[i]), int(self.group_ids[i]), int(self.days[i]),
        )

    def scenario_indices(self, scenario, among=None):
        idx = range(len(self)) if among is None else among
        return [i for i in idx if self.scenarios[i] == scenario]

    def history_fire(self, i):
        return self.inputs[i, :, FIRE_CHANNEL]


@dataclass
class Split:
    train: list
    val: list
    test: list
    test_groups: list = field(default_factory=list)

    def to_json(self):
        return asdict(self)


def split_dataset(event_ids, group_ids, scheme="by_group_leave_one_out", seed=0, fractions=(0.7, 0.15, 0.15), val_fraction=0.15):
    """Assign samples to folds; every event lands in exactly one fold.

    ``by_group_leave_one_out`` returns one :class:`Split` per group (that group
    is the test fold, the rest is divided into train/val by event).
    ``random`` returns a single split drawn by event with ``fractions``.
    """
    event_ids = np.asarray(event_ids)
    group_ids = np.asarray(group_ids)
    rng = np.random.default_rng(seed)
    events = np.unique(event_ids)
    if scheme == "by_group_leave_one_out":
        groups = np.unique(group_ids)
        if groups.size < 2:
            raise ConfigError("leave-one-group-out needs at least two groups")
        folds = []
        for g in groups:
            rest = np.unique(event_ids[group_ids != g])
            order = rest[np.random.default_rng([seed, int(g)]).permutation(rest.size)]
            n_val = max(1, int(round(val_fraction * rest.size))) if rest.size > 1 else 0
            val_ev = set(order[:n_val].tolist())
            train = [i for i in range(event_ids.size) if group_ids[i] != g and event_ids[i] not in val_ev]
            val = [i for i in range(event_ids.size) if event_ids[i] in val_ev]
            test = [i for i in range(event_ids.size) if group_ids[i] == g]
            folds.append(Split(train, val, test, [int(g)]))
        return folds
    if scheme == "random":
        fr = np.asarray(fractions, dtype=float)
        if fr.size != 3 or np.any(fr < 0) or abs(fr.sum() - 1.0) > 1e-9:
            raise ConfigError(f"random split fractions must be three non-negative numbers summing to 1, got {fractions}")
        order = events[rng.permutation(events.size)]
        n_train = int(round(fr[0] * events.size))
        n_val = int(round(fr[1] * events.size))
        fold_of = {}
        for j, e in enumerate(order):
            fold_of[int(e)] = 0 if j < n_train else (1 if j < n_train + n_val else 2)
        parts = ([], [], [])
        for i, e in enumerate(event_ids):
            parts[fold_of[int(e)]].append(i)
        return [Split(*parts)]
    raise ConfigError(f"unknown split scheme {scheme!r}")


@dataclass
class DatasetConfig:
    n_events: int = 64
    n_groups: int = 4
    seed: int = 42
    sim: FireSimConfig = field(default_factory=FireSimConfig)
    split_scheme: str = "by_group_leave_one_out"
    test_group: int = 3
    max_retries: int = 20

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        sim = FireSimConfig(**obj.pop("sim", {}))
        return cls(sim=sim, **obj)


def generate_events(cfg):
    events = []
    for i in range(cfg.n_events):
        ev_cfg = sample_event_config(event_rng(cfg.seed, i, "config"), cfg.sim)
        events.append(simulate_fire_event(cfg.seed, ev_cfg, event_id=i, group_id=i % cfg.n_groups))
    return events


def _event_split(events, cfg):
    ev_ids = [e.event_id for e in events]
    grp = [e.group_id for e in events]
    folds = split_dataset(ev_ids, grp, cfg.split_scheme, cfg.seed)
    if cfg.split_scheme == "by_group_leave_one_out":
        by_group = {f.test_groups[0]: f for f in folds}
        if cfg.test_group not in by_group:
            raise ConfigError(f"test_group {cfg.test_group} not among groups {sorted(by_group)}")
        return by_group[cfg.test_group]
    return folds[0]


def build_dataset(cfg=DatasetConfig()):
    """Simulate, split by event, fit normalisation on train events, encode and crop.

    Extra events are appended (bounded by ``max_retries``) until every scenario
    occurs at least once.
    """
    events = generate_events(cfg)
    extra = 0
    while True:
        fold = _event_split(events, cfg)
        train_events = [events[i] for i in fold.train]
        stats = compute_stats(train_events)
        codebook = ChannelCodebook.from_stats(stats)
        samples = []
        for ev in events:
            encoded, _ = encode_features(ev, codebook)
            for t in range(HISTORY, ev.days):
                samples.append(adaptive_crop(ev, t, encoded))
        present = {s.scenario for s in samples}
        if present >= set(SCENARIOS):
            break
        if extra >= cfg.max_retries:
            missing = sorted(set(SCENARIOS) - present)
            raise GenerationError(f"scenario quota unmet after {extra} extra events; missing {missing}")
        i = cfg.n_events + extra
        ev_cfg = sample_event_config(event_rng(cfg.seed, i, "config"), cfg.sim)
        events.append(simulate_fire_event(cfg.seed, ev_cfg, event_id=i, group_id=i % cfg.n_groups))
        extra += 1
    ds = SampleSet.from_samples(samples, codebook, meta={"dataset": cfg.to_json(), "extra_events": extra})
    folds = split_dataset(ds.event_ids, ds.group_ids, cfg.split_scheme, cfg.seed)
    if cfg.split_scheme == "by_group_leave_one_out":
        split = {f.test_groups[0]: f for f in folds}[cfg.test_group]
    else:
        split = folds[0]
    return ds, split
