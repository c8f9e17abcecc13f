"""
config.py

Default localization parameters, the `RunConfig` record used by the CLI, and JSON persistence
for run configs (see runs/*.json).

"""
import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Optional, Tuple

from .errors import ConfigError

logger = logging.getLogger(__name__)

TREE_ENV_VAR = 'BRONCHOLOC_TREE'

DEFAULT_ALPHA = 1e-9
DEFAULT_M = 1
DEFAULT_LEVELS = 5
DEFAULT_KMEANS_MAX_ITER = 50
DEFAULT_KMEANS_TOL = 0.5
DEFAULT_PERCENTILE = 10.0
DEFAULT_AREA_FRACTION = 0.01
DEFAULT_CONNECTIVITY = 8
DEFAULT_MIN_LUMENS = 2
DEFAULT_TOPK = (1, 3)
DEFAULT_THUMB_SIZE = 32
DEFAULT_TEMPERATURE = 1.0
DEFAULT_GATE = 'branch'

CONFIG_VERSION = 1


def default_tree_path() -> Optional[Path]:
    """Tree file named by $BRONCHOLOC_TREE, or None for the bundled model."""
    value = os.environ.get(TREE_ENV_VAR)
    return Path(value) if value else None


@dataclass(frozen=True)
class RunConfig:
    tree_path: Optional[Path] = None
    frames_dir: Optional[Path] = None
    likelihoods_path: Optional[Path] = None
    centroid_model_path: Optional[Path] = None
    out_dir: Optional[Path] = None
    gate: str = DEFAULT_GATE
    alpha: float = DEFAULT_ALPHA
    m: int = DEFAULT_M
    levels: int = DEFAULT_LEVELS
    percentile: float = DEFAULT_PERCENTILE
    area_fraction: float = DEFAULT_AREA_FRACTION
    connectivity: int = DEFAULT_CONNECTIVITY
    min_lumens: int = DEFAULT_MIN_LUMENS
    topk: Tuple[int, ...] = field(default=DEFAULT_TOPK)
    seed: int = 0

    def merged(self, **overrides) -> 'RunConfig':
        """Returns a copy with every non-None override applied."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        for key in ('tree_path', 'frames_dir', 'likelihoods_path',
                    'centroid_model_path', 'out_dir'):
            if key in changes:
                changes[key] = Path(changes[key])
        if 'topk' in changes:
            changes['topk'] = tuple(int(k) for k in changes['topk'])
        return replace(self, **changes)

    def validate(self, n_nodes: int) -> None:
        """
        Checks the invariants the CLI relies on: referenced inputs exist,
        exactly one likelihood source, k values within [1, n].
        """
        for name in ('tree_path', 'frames_dir', 'likelihoods_path',
                     'centroid_model_path'):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise ConfigError(ConfigError.MISSING_PATH,
                                  '{0}={1}'.format(name, path))
        if self.gate not in ('branch', 'always', 'never'):
            raise ConfigError(ConfigError.BAD_VALUE,
                              'gate={0}'.format(self.gate))
        if (self.likelihoods_path is None) == \
                (self.centroid_model_path is None):
            raise ConfigError(ConfigError.BAD_VALUE,
                              'give exactly one of likelihoods / '
                              'centroid model')
        if not self.topk or any(k < 1 or k > n_nodes for k in self.topk):
            raise ConfigError(ConfigError.BAD_VALUE,
                              'topk={0} with n={1}'.format(self.topk,
                                                           n_nodes))

    def to_dict(self) -> dict:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, Path):
                data[key] = str(value)
        data['topk'] = list(self.topk)
        return data


def load_run_config(path) -> RunConfig:
    """Reads a run config JSON file ({"metadata": ..., "run": {...}})."""
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            payload = json.load(handle)
    except (OSError, ValueError) as exc:
        raise ConfigError(ConfigError.BAD_FILE, '{0}: {1}'.format(path, exc))
    run = payload.get('run') if isinstance(payload, dict) else None
    if not isinstance(run, dict):
        raise ConfigError(ConfigError.BAD_FILE,
                          "{0}: missing 'run' object".format(path))
    known = set(RunConfig.__dataclass_fields__)
    unknown = sorted(set(run) - known)
    if unknown:
        raise ConfigError(ConfigError.BAD_FILE,
                          'unknown keys {0}'.format(unknown))
    logger.debug('loaded run config %s', path)
    return RunConfig().merged(**run)


def save_run_config(config: RunConfig, path) -> None:
    payload = {
        'metadata': {
            'saved_at': datetime.now().isoformat(timespec='seconds'),
            'version': CONFIG_VERSION,
        },
        'run': config.to_dict(),
    }
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(payload, handle, indent=2)


DEBUG_LOG_NAME = 'broncholoc_debug.log'


def init_debug_logging(debug_log_path='.') -> logging.Handler:
    """
    Attaches a file handler writing DEBUG output of every `broncholoc`
    logger to `<debug_log_path>/broncholoc_debug.log`.
    """
    Path(debug_log_path).mkdir(parents=True, exist_ok=True)
    fp = Path(debug_log_path) / DEBUG_LOG_NAME
    hdlr = logging.FileHandler(fp, encoding='utf-8')
    formatter = logging.Formatter('%(asctime)s %(levelname)s %(message)s')
    hdlr.setFormatter(formatter)
    hdlr.setLevel(logging.DEBUG)
    package_logger = logging.getLogger('broncholoc')
    package_logger.addHandler(hdlr)
    package_logger.setLevel(logging.DEBUG)
    return hdlr


def close_debug_logging(hdlr: logging.Handler,
                        level: int = logging.NOTSET) -> None:
    """Detaches a handler from `init_debug_logging` and resets the level."""
    package_logger = logging.getLogger('broncholoc')
    package_logger.removeHandler(hdlr)
    hdlr.close()
    package_logger.setLevel(level)
