"""twistbox: build and certify partially hyperbolic maps from flow time maps
and Dehn twists in flow boxes, on two concrete 3-manifold models."""

from .errors import (
    BadCollar,
    CapExceeded,
    DegenerateLinearization,
    DomainError,
    IntegrationError,
    MissingSplitting,
    NoConvergence,
    NonTermination,
    NotHyperbolic,
    NotUnimodular,
    OutsideBox,
    SingularMap,
    SplittingEstimationFailed,
    TransversalityFail,
    TwistboxError,
    ZeroClass,
    ZeroVector,
)
from .fields import CollarTimeChange, ConstantField, CollaredField, ExprField, eta_time_change
from .linalg import (
    LinearMap3,
    ModelPoint,
    Plane,
    SplittingFrame,
    TangentVector,
    angle_between_lines,
    angle_line_plane,
    transport_plane,
)
from .maps import (
    ComposedMap,
    FiberMapPiece,
    FiberRotationPiece,
    FlowTimePiece,
    IdentityPiece,
    MapPiece,
    apply_map,
    compose,
    differential,
    finite_difference_differential,
)
from .suspension import (
    EtaChartPoint,
    SuspensionModel,
    box_conjugacy_to_base,
    collar_time_change,
    flow,
    make_suspension,
    pushed_box_frame,
)
from .words import Word, twist_symbol

__version__ = "0.1.0"
