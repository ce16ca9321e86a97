"""
Model Catalog - DNN profiles and split accounting (device prefix / edge suffix)

Partition index convention: z = number of layers executed on the device.
z = 0 is full edge (raw input uploaded), z = K is full local (nothing uploaded).
"""
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from units import UnitError, format_quantity, parse_quantity


CATALOG_SCHEMA_VERSION = 1
POSSIBILITY_MODES = ('auto', 'table', 'sigmoid')


class CatalogError(ValueError):
    """Invalid catalog file or invalid catalog query"""


class PossibilityModeError(CatalogError):
    """Requested possibility mode is not available for a model"""


@dataclass(frozen=True)
class LayerProfile:
    """One row of a Table-1 style profile (quantities per input item)"""
    index: int                      # 1-based
    name: str
    param_bytes: float
    flops_per_item: float
    feature_bytes_per_item: float
    possibility: Optional[float] = None   # None when the family has no measured table


@dataclass(frozen=True)
class SplitAccounting:
    """Everything that depends on the partition point z"""
    z: int
    w_dev: float
    w_edge: float
    d_dev: float
    d_edge: float
    feature_bytes: float
    possibility: float


@dataclass(frozen=True)
class ModelProfile:
    model_id: str
    name: str
    layers: Tuple[LayerProfile, ...]
    raw_input_bytes: float
    family: str = ''
    sigmoid_fit: Optional[Tuple[float, float, float, float]] = None
    monotone: bool = False

    # Derived prefix tables, index z = 0..K
    cum_bytes: np.ndarray = field(init=False, repr=False, compare=False)
    cum_flops: np.ndarray = field(init=False, repr=False, compare=False)
    feature_table: np.ndarray = field(init=False, repr=False, compare=False)
    table_possibility: Optional[np.ndarray] = field(init=False, repr=False, compare=False)
    sigmoid_possibility: Optional[np.ndarray] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        k = len(self.layers)
        cum_bytes = np.zeros(k + 1)
        cum_flops = np.zeros(k + 1)
        if k:
            cum_bytes[1:] = np.cumsum([layer.param_bytes for layer in self.layers])
            cum_flops[1:] = np.cumsum([layer.flops_per_item for layer in self.layers])

        features = np.zeros(k + 1)
        features[0] = self.raw_input_bytes
        for z in range(1, k):
            features[z] = self.layers[z - 1].feature_bytes_per_item
        # features[k] stays 0: full local uploads nothing

        table = None
        if k and all(layer.possibility is not None for layer in self.layers):
            table = np.empty(k + 1)
            table[0] = 1.0
            table[1:] = [layer.possibility for layer in self.layers]

        sigmoid = None
        if self.sigmoid_fit is not None:
            sigmoid = sigmoid_possibility(self.sigmoid_fit, np.arange(k + 1, dtype=float))
            # z=0 uploads the raw input
            sigmoid[0] = 1.0

        for name, value in (('cum_bytes', cum_bytes), ('cum_flops', cum_flops),
                            ('feature_table', features), ('table_possibility', table),
                            ('sigmoid_possibility', sigmoid)):
            if value is not None:
                value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def num_layers(self) -> int:
        """K_l"""
        return len(self.layers)

    @property
    def total_bytes(self) -> float:
        """D_l"""
        return float(self.cum_bytes[-1])

    @property
    def total_flops_per_item(self) -> float:
        """W_l"""
        return float(self.cum_flops[-1])

    @property
    def has_table(self) -> bool:
        return self.table_possibility is not None


def sigmoid_possibility(fit: Tuple[float, float, float, float], z, clamp: bool = True):
    """
    phi(z) = w1 / (1 + exp(-w2 (z - w3))) + w4

    Works on scalars and numpy arrays. Clamped to [0, 1] unless clamp=False.
    """
    w1, w2, w3, w4 = fit
    value = w1 / (1.0 + np.exp(-w2 * (np.asarray(z, dtype=float) - w3))) + w4
    if clamp:
        value = np.clip(value, 0.0, 1.0)
    if np.ndim(value) == 0:
        return float(value)
    return value


def _check_z(model: ModelProfile, z: int):
    if not isinstance(z, (int, np.integer)) or z < 0 or z > model.num_layers:
        raise IndexError(f"partition index {z!r} out of range 0..{model.num_layers} for '{model.model_id}'")


def resolve_mode(model: ModelProfile, mode: str) -> str:
    """Map 'auto' to the concrete mode: measured table first, sigmoid fit otherwise"""
    if mode not in POSSIBILITY_MODES:
        raise PossibilityModeError(f"unknown possibility mode '{mode}'")
    if mode == 'auto':
        if model.has_table:
            return 'table'
        if model.sigmoid_fit is not None:
            return 'sigmoid'
        raise PossibilityModeError(f"model '{model.model_id}' has neither a possibility table nor a sigmoid fit")
    if mode == 'table' and not model.has_table:
        raise PossibilityModeError(f"model '{model.model_id}' has no per-layer possibility table")
    if mode == 'sigmoid' and model.sigmoid_fit is None:
        raise PossibilityModeError(f"sigmoid mode requested but model '{model.model_id}' has no sigmoid fit")
    return mode


def possibility_vector(model: ModelProfile, mode: str = 'auto') -> np.ndarray:
    """phi(z) for z = 0..K as a read-only array"""
    if resolve_mode(model, mode) == 'table':
        return model.table_possibility
    return model.sigmoid_possibility


def possibility_at(model: ModelProfile, z: int, mode: str = 'auto') -> float:
    """Privacy-leakage possibility at partition point z; z=0 is 1.0 in every mode"""
    _check_z(model, z)
    return float(possibility_vector(model, mode)[z])


def split(model: ModelProfile, z: int, mode: str = 'auto') -> SplitAccounting:
    """Device-prefix / edge-suffix accounting for partition point z"""
    _check_z(model, z)
    w_dev = float(model.cum_flops[z])
    d_dev = float(model.cum_bytes[z])
    return SplitAccounting(
        z=int(z),
        w_dev=w_dev,
        w_edge=model.total_flops_per_item - w_dev,
        d_dev=d_dev,
        d_edge=model.total_bytes - d_dev,
        feature_bytes=float(model.feature_table[z]),
        possibility=possibility_at(model, z, mode),
    )


def expand_services(model: ModelProfile, count: int) -> List[ModelProfile]:
    """One family profile -> `count` independently deployable services"""
    if count < 1:
        raise CatalogError(f"services_per_model must be >= 1 (got {count})")
    return [
        replace(model, model_id=f"{model.model_id}-s{i}", name=f"{model.name} service {i}")
        for i in range(count)
    ]


# ═══════════════════════════════════════════════════════════
# FILE I/O
# ═══════════════════════════════════════════════════════════

def _parse_layer(raw: Dict, index: int, where: str) -> LayerProfile:
    name = raw.get('name', f'layer{index}')
    row = f"{where} layer {index} ({name})"
    try:
        param_bytes = parse_quantity(raw['param_size'], 'bytes')
        flops = parse_quantity(raw['flops'], 'flops')
        feature = parse_quantity(raw['feature_size'], 'bytes')
    except KeyError as e:
        raise CatalogError(f"{row}: missing column {e}")
    except UnitError as e:
        raise CatalogError(f"{row}: {e}")

    for label, value in (('param_size', param_bytes), ('flops', flops), ('feature_size', feature)):
        if not math.isfinite(value) or value < 0:
            raise CatalogError(f"{row}: {label} must be a finite non-negative quantity (got {value})")

    possibility = raw.get('possibility')
    if possibility is not None:
        if isinstance(possibility, bool) or not isinstance(possibility, (int, float)):
            raise CatalogError(f"{row}: possibility must be a number (got {possibility!r})")
        if not 0.0 <= possibility <= 1.0:
            raise CatalogError(f"{row}: possibility {possibility} outside [0, 1]")
        possibility = float(possibility)

    return LayerProfile(index=index, name=name, param_bytes=param_bytes, flops_per_item=flops,
                        feature_bytes_per_item=feature, possibility=possibility)


def parse_model(raw: Dict, source: str = '<memory>') -> ModelProfile:
    """Build and validate one ModelProfile from its JSON dict"""
    model_id = raw.get('model_id')
    if not model_id:
        raise CatalogError(f"{source}: model entry without 'model_id'")
    where = f"{source}: model '{model_id}'"

    layers_raw = raw.get('layers') or []
    if not layers_raw:
        raise CatalogError(f"{where}: empty layer list")
    layers = tuple(_parse_layer(layer, i, where) for i, layer in enumerate(layers_raw, 1))

    possibilities = [layer.possibility for layer in layers]
    if any(p is not None for p in possibilities) and any(p is None for p in possibilities):
        raise CatalogError(f"{where}: possibility column must be given for every layer or for none")

    if 'raw_input_size' not in raw:
        raise CatalogError(f"{where}: missing 'raw_input_size'")
    try:
        raw_input = parse_quantity(raw['raw_input_size'], 'bytes')
    except UnitError as e:
        raise CatalogError(f"{where}: raw_input_size: {e}")
    if raw_input <= 0:
        raise CatalogError(f"{where}: raw_input_size must be positive")

    fit = raw.get('sigmoid_fit')
    if fit is not None:
        if len(fit) != 4 or not all(isinstance(v, (int, float)) for v in fit):
            raise CatalogError(f"{where}: sigmoid_fit must be four numbers [w1, w2, w3, w4]")
        fit = tuple(float(v) for v in fit)

    if possibilities[0] is None and fit is None:
        raise CatalogError(f"{where}: needs a possibility column or a sigmoid_fit")

    monotone = bool(raw.get('monotone', False))
    if monotone and possibilities[0] is not None:
        for prev, cur in zip(layers, layers[1:]):
            if cur.possibility > prev.possibility:
                raise CatalogError(
                    f"{where} layer {cur.index} ({cur.name}): possibility {cur.possibility} increases "
                    f"over layer {prev.index} ({prev.possibility}) in a table flagged monotone")

    model = ModelProfile(model_id=str(model_id), name=raw.get('name', model_id), layers=layers,
                         raw_input_bytes=raw_input, family=raw.get('family', ''),
                         sigmoid_fit=fit, monotone=monotone)

    # Cross-check declared totals against the recomputed ones
    for key, dimension, actual in (('total_size', 'bytes', model.total_bytes),
                                   ('total_flops', 'flops', model.total_flops_per_item)):
        if key in raw:
            try:
                declared = parse_quantity(raw[key], dimension)
            except UnitError as e:
                raise CatalogError(f"{where}: {key}: {e}")
            if not math.isclose(declared, actual, rel_tol=1e-6):
                raise CatalogError(f"{where}: declared {key} {declared} does not match layer sum {actual}")

    return model


def load_catalog(path) -> List[ModelProfile]:
    """Load a catalog file (one model family, one or more profiles)"""
    path = Path(path)
    try:
        with open(path, 'r') as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise CatalogError(f"{path}: invalid JSON ({e})")

    entries = doc.get('models') if isinstance(doc, dict) and 'models' in doc else [doc]
    if not isinstance(entries, list) or not entries:
        raise CatalogError(f"{path}: no models declared")

    models = [parse_model(entry, str(path)) for entry in entries]
    ids = [m.model_id for m in models]
    if len(set(ids)) != len(ids):
        raise CatalogError(f"{path}: duplicate model_id")
    return models


def model_to_dict(model: ModelProfile) -> Dict:
    """Base-unit JSON view of a profile; parse_model() of it is bit-exact"""
    doc = {
        'model_id': model.model_id,
        'name': model.name,
        'family': model.family,
        'raw_input_size': format_quantity(model.raw_input_bytes, 'bytes'),
        'monotone': model.monotone,
        'layers': [],
    }
    if model.sigmoid_fit is not None:
        doc['sigmoid_fit'] = list(model.sigmoid_fit)
    for layer in model.layers:
        row = {
            'name': layer.name,
            'param_size': format_quantity(layer.param_bytes, 'bytes'),
            'flops': format_quantity(layer.flops_per_item, 'flops'),
            'feature_size': format_quantity(layer.feature_bytes_per_item, 'bytes'),
        }
        if layer.possibility is not None:
            row['possibility'] = layer.possibility
        doc['layers'].append(row)
    return doc


def save_catalog(path, models: List[ModelProfile]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {'schema_version': CATALOG_SCHEMA_VERSION, 'models': [model_to_dict(m) for m in models]}
    with open(path, 'w') as f:
        json.dump(doc, f, indent=2)
