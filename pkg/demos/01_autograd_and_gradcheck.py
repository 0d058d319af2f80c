"""Reverse-mode autograd on float64 tensors, checked against central differences.

Run: python demos/01_autograd_and_gradcheck.py
"""
import numpy as np

from compass.gradcheck_suite import run_all
from compass.numerics import tensor as T
from compass.numerics import NonFiniteError, Tensor, check_gradients, forward_backward, trace_ops

rng = np.random.default_rng(0)

# A small expression: softplus-ish score on a matrix product.
x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
w = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
with trace_ops() as trace:
    loss = T.log(T.exp(x @ w) + 1.0).sum()
forward_backward(loss)
print("loss:", round(loss.item(), 6))
print("ops recorded:", [op for op, _ in trace])
print("dL/dw:\n", w.grad)

# The same gradient, numerically.
res = check_gradients(lambda: T.log(T.exp(x @ w) + 1.0).sum(), [x, w], name="demo")
print(f"gradcheck {res.name}: max rel err {res.max_rel_error:.2e}, passed={res.passed}")

# Non-finite values stop the graph at the op that produced them.
try:
    T.log(Tensor(np.array([-1.0])))
except NonFiniteError as err:
    print("caught:", err)

# The packaged suite covers every primitive, loss and model block.
results = [r for r, _ in run_all()]
print(f"suite: {sum(r.passed for r in results)}/{len(results)} passed")
