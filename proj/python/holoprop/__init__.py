from ._core import (
    DivergenceError,
    Net,
    cosine_similarity,
    load_mnist,
    synth_dataset,
    toy_estimates,
    __version__,
)

__all__ = [
    "DivergenceError",
    "Net",
    "cosine_similarity",
    "load_mnist",
    "synth_dataset",
    "toy_estimates",
    "__version__",
]
