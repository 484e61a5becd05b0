"""frontier-lab: portfolio optimization under structural misspecification.

Library modules:

- ``stochastics`` — deterministic random streams, samplers, OLS, moments
- ``factor_bias`` — omitted-variable bias algebra and the attenuation law
- ``geometry`` — inverse-covariance signal geometry and Sharpe identities
- ``frontier`` — closed-form equality-constrained mean-variance frontiers
- ``signals`` — confounded DGPs, logistic fitting, weight maps, transforms
- ``market_data`` — price CSV ingestion and simple-return panels
- ``experiments``/``cli`` — the deterministic experiment harness
"""

from .errors import (
    DataFormatError,
    DegenerateStructureError,
    DomainError,
    FrontierLabError,
    InsufficientDataError,
    ShapeError,
    SingularityError,
)

__version__ = "0.1.0"

__all__ = [
    "DataFormatError",
    "DegenerateStructureError",
    "DomainError",
    "FrontierLabError",
    "InsufficientDataError",
    "ShapeError",
    "SingularityError",
    "__version__",
]
