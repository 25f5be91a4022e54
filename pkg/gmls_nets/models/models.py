from typing import List, Literal, TypedDict


ExperimentTag = Literal["regress-operator", "advdiff", "brownian", "qoi"]
Activation = Literal["relu", "tanh", "identity"]
MapKind = Literal["linear", "mlp"]
Reducer = Literal["max", "mean"]
Layout = Literal["uniform", "jittered", "random"]
InitKind = Literal["random", "zeros", "least_squares"]


class _GeometryRequired(TypedDict):
    dim: int
    n_points: int


class GeometryParams(_GeometryRequired, total=False):
    length: float
    layout: Layout
    periodic: bool
    notes: str


class _KernelRequired(TypedDict):
    epsilon: float


class KernelParams(_KernelRequired, total=False):
    power: int
    notes: str


class _BasisRequired(TypedDict):
    order: int


class BasisParams(_BasisRequired, total=False):
    notes: str


class _LayerRequired(TypedDict):
    kind: MapKind
    out_channels: int


class LayerSpec(_LayerRequired, total=False):
    hidden: List[int]
    activation: Activation
    epsilon: float
    order: int
    n_targets: int
    post_activation: Activation
    notes: str


class _PoolRequired(TypedDict):
    reducer: Reducer
    n_points: int
    epsilon: float


class PoolSpec(_PoolRequired, total=False):
    notes: str


class _NetworkRequired(TypedDict):
    kind: MapKind


class NetworkParams(_NetworkRequired, total=False):
    hidden: List[int]
    activation: Activation
    init: InitKind
    target_scaling: bool
    layers: List[LayerSpec]
    pool: PoolSpec
    notes: str


class _OptimizerRequired(TypedDict):
    kind: Literal["sgd", "adam"]
    lr: float
    epochs: int


class OptimizerParams(_OptimizerRequired, total=False):
    batch_size: int
    log_every: int
    notes: str


class _RegressionDatasetRequired(TypedDict):
    operator: Literal["laplacian", "burgers"]
    n_train: int
    n_test: int


class RegressionDatasetParams(_RegressionDatasetRequired, total=False):
    max_wavenumber: int
    alpha: float
    viscosity: float
    position_channels: bool
    notes: str


class _ModelGeometryRequired(TypedDict):
    epsilon: float
    order: int


class ModelGeometryParams(_ModelGeometryRequired, total=False):
    power: int
    notes: str


class _AdvDiffDatasetRequired(TypedDict):
    a: float
    nu: float
    dt_ratios: List[float]


class AdvDiffDatasetParams(_AdvDiffDatasetRequired, total=False):
    x0: float
    t_train: float
    t_final: float
    fdm: ModelGeometryParams
    fvm: ModelGeometryParams
    notes: str


class _BrownianDatasetRequired(TypedDict):
    n_particles: int
    n_cells: int
    dt: float


class BrownianDatasetParams(_BrownianDatasetRequired, total=False):
    diffusivity: float
    train_steps: List[int]
    rollout_steps: int
    filter_width_bins: float
    normalize: bool
    model: ModelGeometryParams
    notes: str


class _QoIDatasetRequired(TypedDict):
    n_train: int
    n_test: int


class QoIDatasetParams(_QoIDatasetRequired, total=False):
    max_wavenumber: int
    alpha: float
    notes: str


class RegressionAcceptance(TypedDict, total=False):
    max_test_rel_l2: float
    notes: str


class AdvDiffAcceptance(TypedDict, total=False):
    min_exact_growth: float
    min_trained_fvm_gain: float
    max_trained_fvm_spread: float
    notes: str


class BrownianAcceptance(TypedDict, total=False):
    max_final_rel_l2: float
    notes: str


class QoIAcceptance(TypedDict, total=False):
    max_test_rel_rmse: float
    notes: str


class OutputParams(TypedDict, total=False):
    dir: str
    notes: str


class _ExperimentRequired(TypedDict):
    version: int
    experiment: ExperimentTag
    seed: int


class ExperimentConfig(_ExperimentRequired, total=False):
    geometry: GeometryParams
    kernel: KernelParams
    basis: BasisParams
    network: NetworkParams
    optimizer: OptimizerParams
    dataset: dict
    acceptance: dict
    output: OutputParams
    notes: str


DATASET_SCHEMAS = {
    "regress-operator": RegressionDatasetParams,
    "advdiff": AdvDiffDatasetParams,
    "brownian": BrownianDatasetParams,
    "qoi": QoIDatasetParams,
}

ACCEPTANCE_SCHEMAS = {
    "regress-operator": RegressionAcceptance,
    "advdiff": AdvDiffAcceptance,
    "brownian": BrownianAcceptance,
    "qoi": QoIAcceptance,
}


class LossRecord(TypedDict):
    epoch: int
    train_loss: float
    test_loss: float
