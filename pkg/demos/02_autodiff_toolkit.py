"""The reverse-mode autodiff tape, MLPs, Adam, and gradient checking.

Everything the model trains with is built on this small numpy tape; this
demo exercises each piece directly.
"""

import numpy as np

from latentiv.autodiff import (AdamState, Tensor, adam_step, grad_check,
                               mlp_apply, mlp_init)

# --- tensors record operations; backward() fills .grad ---------------------
a = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]), requires_grad=True)
b = Tensor(np.array([10.0, 20.0]), requires_grad=True)  # broadcast over rows
loss = ((a + b) ** 2).mean()
loss.backward()
print("d loss / d a =\n", a.grad)
print("d loss / d b =", b.grad, "(broadcast gradients sum over rows)")

# --- a small MLP, checked against central finite differences ---------------
rng = np.random.default_rng(0)
net = mlp_init([3, 16, 1], rng)  # Glorot-uniform init, elu hidden layers
x = rng.normal(size=(8, 3))

report = grad_check(lambda: (mlp_apply(net, x) ** 2).mean(), net.tensors(),
                    h=1e-5)
print(f"\ngrad check: max relative error {report.max_rel_error:.2e} "
      f"(worst tensor #{report.worst_tensor}), ok={report.ok}")

# --- Adam drives a quadratic to zero ---------------------------------------
w = np.array(5.0)
state = AdamState.for_arrays([w], lr=0.1)
for step in range(300):
    state, (w,) = adam_step(state, [w], [2.0 * w])  # d(w^2)/dw
print(f"\nAdam on f(w) = w^2 from w=5: after 300 steps w = {float(w):.2e}")

# Adam is functional: the same (state, params, grads) always maps to the
# same next state, so training runs are reproducible.
s1, p1 = adam_step(AdamState.for_arrays([np.ones(2)]), [np.ones(2)], [np.ones(2)])
s2, p2 = adam_step(AdamState.for_arrays([np.ones(2)]), [np.ones(2)], [np.ones(2)])
print("deterministic step:", np.array_equal(p1[0], p2[0]))
