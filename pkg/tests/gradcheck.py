"""Central finite-difference gradient checking for torch modules."""

import torch


def finite_difference(loss_fn, tensor: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """Central differences of loss_fn w.r.t. every coordinate of ``tensor``."""
    grad = torch.zeros_like(tensor)
    flat = tensor.data.view(-1)
    grad_flat = grad.view(-1)
    for i in range(flat.numel()):
        original = flat[i].item()
        flat[i] = original + eps
        plus = float(loss_fn())
        flat[i] = original - eps
        minus = float(loss_fn())
        flat[i] = original
        grad_flat[i] = (plus - minus) / (2.0 * eps)
    return grad


def relative_error(analytic: torch.Tensor, numeric: torch.Tensor, atol: float = 1e-8) -> float:
    """Max absolute difference relative to the gradient scale of the tensor.

    Differences below ``atol`` count as exact: they are indistinguishable
    from central-difference noise, which matters for tensors whose true
    gradient is zero (e.g. a conv bias immediately followed by batch norm).
    """
    diff = (analytic - numeric).abs().max().item()
    if diff <= atol:
        return 0.0
    scale = max(analytic.abs().max().item(), numeric.abs().max().item(), 1e-10)
    return diff / scale


def check_parameter_gradients(module: torch.nn.Module, loss_fn, *, eps: float = 1e-5,
                              tol: float = 1e-4) -> dict[str, float]:
    """Compare autograd gradients of every parameter against central differences.

    Returns the per-parameter relative errors; raises AssertionError listing
    any tensor above ``tol``.
    """
    for p in module.parameters():
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {name: p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
                for name, p in module.named_parameters()}
    errors = {}
    with torch.no_grad():
        pass
    for name, param in module.named_parameters():
        numeric = finite_difference(lambda: loss_fn().detach(), param, eps=eps)
        errors[name] = relative_error(analytic[name], numeric)
    bad = {name: err for name, err in errors.items() if err >= tol}
    assert not bad, f"gradient mismatches above {tol}: {bad}"
    return errors
