"""Python surface of the GradMix library.

The heavy lifting lives in the ``_gradmix`` extension module; this package
re-exports the main operations.
"""

try:
    from ._gradmix import (
        DenseNet,
        cross_entropy,
        forward,
        inner,
        last_layer_grad,
        load_idx_count,
        make_mlp,
        mixed_grad,
        mixed_prediction,
        run_synthetic,
        true_mixed_grad,
    )
except ImportError:  # in-tree builds place the extension beside the package
    from _gradmix import (
        DenseNet,
        cross_entropy,
        forward,
        inner,
        last_layer_grad,
        load_idx_count,
        make_mlp,
        mixed_grad,
        mixed_prediction,
        run_synthetic,
        true_mixed_grad,
    )

__all__ = [
    "DenseNet",
    "cross_entropy",
    "forward",
    "inner",
    "last_layer_grad",
    "load_idx_count",
    "make_mlp",
    "mixed_grad",
    "mixed_prediction",
    "run_synthetic",
    "true_mixed_grad",
]
