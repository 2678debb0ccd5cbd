"""Synthetic fire events, feature encoding, cropping, splits and the FGDS container."""

from firegap.datagen.channels import (
    ENCODED_NAMES,
    ENV_CHANNELS,
    FIRE_CHANNEL,
    FIRE_DERIVED,
    FIRE_TIME_CHANNEL,
    LAND_COVER_CLASSES,
    N_ENCODED,
    RAW_CHANNELS,
    RAW_INDEX,
    RAW_NAMES,
    ChannelCodebook,
    ChannelEntry,
)
from firegap.datagen.container import FormatError, TruncatedError, read_dataset, read_manifest, write_dataset
from firegap.datagen.dataset import (
    DatasetConfig,
    SampleSet,
    Split,
    build_dataset,
    generate_events,
    split_dataset,
)
from firegap.datagen.encode import (
    HISTORY,
    SCENARIOS,
    WINDOW,
    DataError,
    SampleSequence,
    adaptive_crop,
    classify_scenario,
    compute_stats,
    crop_origin,
    encode_features,
    encode_raw,
)
from firegap.datagen.simulate import (
    FireEvent,
    FireSimConfig,
    GenerationError,
    event_rng,
    sample_event_config,
    simulate_fire_event,
)
