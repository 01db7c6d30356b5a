"""Single-layer GRU sequence encoder with masking on non-recurrent outputs.

The recurrent state is never masked: each step consumes the previous raw
hidden state, so information keeps flowing through masked units. The mask
multiplies only the per-step output copy that feeds forward to classifiers,
which is also the only edge whose gradient a mask can zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masking import apply_mask
from .numerics import ShapeError, Tensor, gru_step, timestep


@dataclass
class GruParams:
    """Gate parameters for one GRU layer mapping inputs (dim d) to width n."""

    w_z: Tensor
    u_z: Tensor
    b_z: Tensor
    w_r: Tensor
    u_r: Tensor
    b_r: Tensor
    w_h: Tensor
    u_h: Tensor
    b_h: Tensor

    @classmethod
    def initialize(cls, input_dim: int, hidden: int, rng: np.random.Generator,
                   scale: float = 0.08) -> "GruParams":
        """Uniform(-scale, scale) weights; draw order is fixed for determinism.

        Gate biases start at constants: the update gate opens slowly (-2) so
        the final state can aggregate whole sequences, and the reset gate
        starts open (+1). With small random weights and a last-step readout,
        zero-centered gate biases leave a memory half-life of one step and
        training stalls near chance.
        """
        def mat(rows, cols):
            return Tensor(rng.uniform(-scale, scale, (rows, cols)))

        return cls(
            w_z=mat(input_dim, hidden), u_z=mat(hidden, hidden),
            b_z=Tensor(np.full(hidden, -2.0)),
            w_r=mat(input_dim, hidden), u_r=mat(hidden, hidden),
            b_r=Tensor(np.full(hidden, 1.0)),
            w_h=mat(input_dim, hidden), u_h=mat(hidden, hidden),
            b_h=Tensor(np.zeros(hidden)),
        )

    @property
    def input_dim(self) -> int:
        return self.w_z.data.shape[0]

    @property
    def hidden(self) -> int:
        return self.w_z.data.shape[1]

    def tensors(self) -> list[Tensor]:
        return [self.w_z, self.u_z, self.b_z,
                self.w_r, self.u_r, self.b_r,
                self.w_h, self.u_h, self.b_h]


@dataclass
class GruOutput:
    """Per-step raw hidden states and their masked feed-forward copies.

    ``hidden`` is identical for any mask (the recurrence never sees masks);
    ``outputs[i]`` is ``hidden[i]`` times the mask, and ``final`` is the last
    masked output, the vector classifiers consume.
    """

    hidden: list[Tensor]
    outputs: list[Tensor]

    @property
    def final(self) -> Tensor:
        return self.outputs[-1]


def gru_cell_step(params: GruParams, x: Tensor, h_prev: Tensor) -> Tensor:
    """One GRU step for a batch: x is (b, d), h_prev is (b, n)."""
    if x.data.ndim != 2 or x.data.shape[1] != params.input_dim:
        raise ShapeError(f"input shape {x.data.shape} does not match dim {params.input_dim}")
    if h_prev.data.ndim != 2 or h_prev.data.shape[1] != params.hidden:
        raise ShapeError(f"state shape {h_prev.data.shape} does not match width {params.hidden}")
    return gru_step(x, h_prev,
                    params.w_z, params.u_z, params.b_z,
                    params.w_r, params.u_r, params.b_r,
                    params.w_h, params.u_h, params.b_h)


def encode_sequence(params: GruParams, inputs: Tensor, mask=None) -> GruOutput:
    """Unroll the GRU over a (batch, steps, dim) tensor from a zero state.

    ``mask`` is a width-n binary vector (or per-sample (batch, n) array) or
    None. Each step recurs on the raw hidden state and emits a masked output;
    with no mask the outputs are the hidden states themselves.
    """
    if inputs.data.ndim != 3:
        raise ShapeError(f"expected (batch, steps, dim) input, got shape {inputs.data.shape}")
    batch, steps, dim = inputs.data.shape
    if steps < 1:
        raise ValueError("cannot encode an empty sequence")
    if dim != params.input_dim:
        raise ShapeError(f"input dim {dim} does not match encoder dim {params.input_dim}")
    mask_arr = None
    if mask is not None:
        mask_arr = np.asarray(mask, dtype=np.float64)
        if mask_arr.shape[-1] != params.hidden:
            raise ShapeError(f"mask width {mask_arr.shape[-1]} does not match hidden {params.hidden}")
    h = Tensor(np.zeros((batch, params.hidden)), requires_grad=False)
    hidden: list[Tensor] = []
    outputs: list[Tensor] = []
    for i in range(steps):
        h = gru_cell_step(params, timestep(inputs, i), h)
        hidden.append(h)
        outputs.append(h if mask_arr is None else apply_mask(h, mask_arr))
    return GruOutput(hidden=hidden, outputs=outputs)
