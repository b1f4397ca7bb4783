"""Architecture descriptors and closed-form parameter counts."""
from __future__ import annotations

from dataclasses import asdict, dataclass

FAMILIES = ("mnl", "nl", "fdnn", "asudnn")


@dataclass(frozen=True)
class ArchSpec:
    """Model family plus its shape hyperparameters.

    F-DNN uses ``depth`` hidden layers of ``width`` units.  ASU-DNN uses
    ``pre_depth`` layers of ``pre_width`` units on each alternative's attributes
    (and on the individual attributes) before they are joined, followed by
    ``post_depth`` layers of ``post_width`` units per alternative.  ``nests``
    partitions alternative indices for the nested logit.
    """

    family: str
    depth: int = 1
    width: int = 1
    pre_depth: int = 0
    post_depth: int = 0
    pre_width: int = 1
    post_width: int = 1
    nests: tuple | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "fdnn":
            if self.depth < 1:
                raise ValueError("F-DNN needs depth >= 1")
            if self.width < 1:
                raise ValueError("F-DNN width must be >= 1")
        if self.family == "asudnn":
            if self.pre_depth < 0 or self.post_depth < 0:
                raise ValueError("ASU-DNN depths must be >= 0")
            if self.pre_width < 1 or self.post_width < 1:
                raise ValueError("ASU-DNN widths must be >= 1")
        if self.nests is not None:
            object.__setattr__(self, "nests", tuple(tuple(int(a) for a in m) for m in self.nests))
        if self.family == "nl" and self.nests is None:
            raise ValueError("nested logit needs a nest partition")

    def validate_nests(self, K: int):
        if self.nests is None:
            return
        flat = [a for m in self.nests for a in m]
        if any(len(m) == 0 for m in self.nests):
            raise ValueError("nests must be nonempty")
        if sorted(flat) != list(range(K)):
            raise ValueError(f"nests {self.nests} do not partition alternatives 0..{K - 1}")

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.nests is not None:
            d["nests"] = [list(m) for m in self.nests]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchSpec":
        return cls(**d)


def param_breakdown(arch: ArchSpec, input_dims, K: int, batch_norm: bool = False) -> dict:
    """Trainable-scalar counts split into weights, biases and batch-norm terms.

    ``input_dims`` is ``(x_dims, d_z)`` with ``x_dims`` the per-alternative
    attribute counts (an int is read as the same count for every alternative).
    ``hidden_to_hidden`` counts weights of matrices mapping one hidden layer to
    the next.
    """
    x_dims, d_z = input_dims
    if isinstance(x_dims, int):
        x_dims = (x_dims,) * K
    x_dims = tuple(x_dims)
    if len(x_dims) != K:
        raise ValueError(f"expected {K} attribute counts, got {len(x_dims)}")
    weights = biases = bn = h2h = 0
    extra = 0
    if arch.family in ("mnl", "nl"):
        weights = sum(x_dims) + d_z * (K - 1)
        biases = K - 1
        if arch.family == "nl":
            extra = len(arch.nests) - 1
    elif arch.family == "fdnn":
        M, n = arch.depth, arch.width
        d_in = d_z + sum(x_dims)
        weights = d_in * n + (M - 1) * n * n + n * K
        biases = M * n + K
        h2h = (M - 1) * n * n
        bn = 2 * M * n if batch_norm else 0
    else:
        M1, M2, n1, n2 = arch.pre_depth, arch.post_depth, arch.pre_width, arch.post_width
        for d in x_dims:
            if M1 > 0:
                weights += d * n1 + (M1 - 1) * n1 * n1
                biases += M1 * n1
                h2h += (M1 - 1) * n1 * n1
                bn += 2 * M1 * n1
                joined = n1 * (2 if d_z else 1)
            else:
                joined = d + d_z
            if M2 > 0:
                weights += joined * n2 + (M2 - 1) * n2 * n2
                biases += M2 * n2
                h2h += (M2 - 1) * n2 * n2 + (joined * n2 if M1 > 0 else 0)
                bn += 2 * M2 * n2
                head_in = n2
            else:
                head_in = joined
            weights += head_in
            biases += 1
        if M1 > 0 and d_z:
            weights += d_z * n1 + (M1 - 1) * n1 * n1
            biases += M1 * n1
            h2h += (M1 - 1) * n1 * n1
            bn += 2 * M1 * n1
        if not batch_norm:
            bn = 0
    total = weights + biases + bn + extra
    return {"weights": weights, "biases": biases, "batch_norm": bn, "nest_scales": extra,
            "hidden_to_hidden": h2h, "total": total}


def count_params(arch: ArchSpec, input_dims, K: int, batch_norm: bool = False) -> int:
    """Exact number of trainable scalars."""
    return param_breakdown(arch, input_dims, K, batch_norm)["total"]
