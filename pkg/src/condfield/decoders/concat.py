from __future__ import annotations

from ..autodiff import Tensor, ops
from .base import Decoder, dense
from .config import concat_layout


class ConcatDecoder(Decoder):
    """ReLU MLP with latent sub-codes concatenated to the inputs of chosen layers.

    A layer whose input is ``[h, z_sub]`` is evaluated as ``h @ W_h + z_sub @ W_z``
    with the sub-code term computed once per instance and broadcast over
    samples; this is the same linear map as multiplying the concatenation.
    """

    def build(self):
        self.layout = concat_layout(self.cfg)
        self.layers = []
        for i, e in enumerate(self.layout):
            fan_in = e["hidden"] + e["latent"] + e["skip"]
            self.layers.append(self.linear(f"layer{i}", fan_in, e["out"]))

    def layer_input_dims(self) -> list[int]:
        return [e["hidden"] + e["latent"] + e["skip"] for e in self.layout]

    def _raw(self, coords: Tensor, latent: Tensor, embedding) -> Tensor:
        z = self._flat_latent(latent) if self.cfg.latent_dim else None
        n_inst = coords.shape[0]
        if z is not None and z.shape[0] != n_inst:
            raise ValueError(f"concat: {z.shape[0]} latents for {n_inst} instances")
        h = coords
        offset = 0
        last = len(self.layout) - 1
        for i, (e, (w, b)) in enumerate(zip(self.layout, self.layers)):
            nh, nz = e["hidden"], e["latent"]
            if nz == 0 and e["skip"] == 0:
                out = dense(h, w, b)
            else:
                out = ops.matmul(h, ops.getitem(w, slice(0, nh)))
                per_inst = b
                if nz:
                    sub = ops.getitem(z, (slice(None), slice(offset, offset + nz)))
                    per_inst = ops.add(ops.matmul(sub, ops.getitem(w, slice(nh, nh + nz))), b)
                    per_inst = ops.reshape(per_inst, (n_inst, 1, -1))
                    offset += nz
                out = ops.add(out, per_inst)
                if e["skip"]:
                    # re-inject the first layer's input [coords, z]
                    d = self.cfg.in_dim
                    w_skip = ops.getitem(w, slice(nh + nz, None))
                    out = ops.add(out, ops.matmul(coords, ops.getitem(w_skip, slice(0, d))))
                    zs = ops.matmul(z, ops.getitem(w_skip, slice(d, None)))
                    out = ops.add(out, ops.reshape(zs, (n_inst, 1, -1)))
            h = out if i == last else ops.relu(out)
        return h
