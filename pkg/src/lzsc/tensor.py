"""Dense tensor substrate: same-size convolution and its adjoints, Sobel, concat.

Images and feature maps are numpy arrays laid out ``(..., H, W, C)``
(row-major, channel fastest); any leading axes are treated as a batch.
Convolution kernels are arrays of shape ``(out, in, kh, kw)`` with odd
spatial size. "Convolution" here is cross-correlation with zero padding,
as in most deep-learning frameworks.
"""
import numpy as np

from . import _backend


class ContractError(ValueError):
    """Raised when an operation's shape or value preconditions are violated."""


SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()
# (out=2, in=1, 3, 3): channel 0 is d/dx (across columns), channel 1 is d/dy.
_SOBEL_KERNEL = np.stack([SOBEL_X, SOBEL_Y])[:, None]


def check_kernel(kernel):
    kernel = np.asarray(kernel)
    if kernel.ndim != 4:
        raise ContractError(f"kernel must be 4-D (out, in, kh, kw), got shape {kernel.shape}")
    kh, kw = kernel.shape[2:]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ContractError(f"kernel spatial size must be odd, got {kh}x{kw}")
    return kernel


def _as_batch(x):
    x = np.asarray(x)
    if x.ndim < 3:
        raise ContractError(f"expected (..., H, W, C) tensor, got shape {x.shape}")
    lead = x.shape[:-3]
    return np.ascontiguousarray(x.reshape((-1,) + x.shape[-3:])), lead


def _dtype(*arrays):
    dt = np.result_type(*arrays)
    return dt if dt in (np.float32, np.float64) else np.dtype(np.float64)


def conv2d_same(x, kernel):
    """Stride-1 zero-padded correlation; output keeps H and W of ``x``."""
    kernel = check_kernel(kernel)
    x = np.asarray(x)
    if x.ndim < 3 or x.shape[-1] != kernel.shape[1]:
        raise ContractError(
            f"input has {x.shape[-1] if x.ndim else 0} channels, kernel expects {kernel.shape[1]}"
        )
    dt = _dtype(x, kernel)
    xb, lead = _as_batch(x.astype(dt, copy=False))
    out = _backend.kernels.conv_forward(xb, kernel.astype(dt, copy=False), _backend.num_threads())
    return out.reshape(lead + out.shape[1:])


def conv2d_grad_input(output_grad, kernel):
    """Adjoint of :func:`conv2d_same` with respect to its input."""
    kernel = check_kernel(kernel)
    output_grad = np.asarray(output_grad)
    if output_grad.ndim < 3 or output_grad.shape[-1] != kernel.shape[0]:
        raise ContractError(
            f"output_grad has {output_grad.shape[-1]} channels, kernel produces {kernel.shape[0]}"
        )
    flipped = kernel[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    return conv2d_same(output_grad, flipped)


def conv2d_grad_weights(x, output_grad, kernel_shape):
    """Gradient of a scalar loss w.r.t. the kernel, summed over batch and pixels."""
    O, C, kh, kw = kernel_shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ContractError(f"kernel spatial size must be odd, got {kh}x{kw}")
    x = np.asarray(x)
    output_grad = np.asarray(output_grad)
    if x.shape[-1] != C or output_grad.shape[-1] != O or x.shape[:-1] != output_grad.shape[:-1]:
        raise ContractError(
            f"inconsistent shapes: input {x.shape}, output_grad {output_grad.shape}, kernel {tuple(kernel_shape)}"
        )
    dt = _dtype(x, output_grad)
    xb, _ = _as_batch(x.astype(dt, copy=False))
    gb, _ = _as_batch(output_grad.astype(dt, copy=False))
    return _backend.kernels.conv_grad_weights(xb, gb, kh, kw, _backend.num_threads())


def sobel_components(image):
    """Return the (d/dx, d/dy) Sobel responses of a single-channel image as a 2-channel tensor."""
    image = np.asarray(image)
    if image.ndim < 3 or image.shape[-1] != 1:
        raise ContractError(f"sobel expects a single-channel (..., H, W, 1) image, got {image.shape}")
    image = image.astype(_dtype(image), copy=False)
    pad = [(0, 0)] * (image.ndim - 3) + [(1, 1), (1, 1), (0, 0)]
    xp = np.pad(image[..., 0:1], pad)
    # Separable form: difference first, then the [1, 2, 1] smoothing. Flat
    # regions give exact zeros, which keeps |.| subgradients at 0 there.
    dx = xp[..., :, 2:, :] - xp[..., :, :-2, :]
    dy = xp[..., 2:, :, :] - xp[..., :-2, :, :]
    gx = dx[..., :-2, :, :] + 2.0 * dx[..., 1:-1, :, :] + dx[..., 2:, :, :]
    gy = dy[..., :, :-2, :] + 2.0 * dy[..., :, 1:-1, :] + dy[..., :, 2:, :]
    return np.concatenate([gx, gy], axis=-1)


def sobel_gradient(image):
    """Sobel gradient magnitude |dx| + |dy|, zero padded, same size."""
    g = sobel_components(image)
    return np.abs(g[..., :1]) + np.abs(g[..., 1:])


def sobel_gradient_backward(image, grad_out):
    """Vector-Jacobian product of :func:`sobel_gradient` (subgradient 0 at |.| kinks)."""
    g = sobel_components(image)
    return conv2d_grad_input(np.sign(g) * grad_out, _SOBEL_KERNEL.astype(g.dtype))


def channel_concat(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[:-1] != b.shape[:-1]:
        raise ContractError(f"cannot concatenate {a.shape} and {b.shape}: spatial/batch shapes differ")
    return np.concatenate([a, b], axis=-1)
