"""Equivariant attention network with a noise head and a property head.

Each atom carries scalar features ``u`` (F) and vector features ``v`` (3 x F).
A layer computes attention weights from queries, keys and a radial filter,
splits the filtered values into three parts that update the vectors, the
scalars and the vector gate, then applies a residual layer norm to ``u`` and
a per-channel gain-only norm to ``v``.  Distances are dense (N x N) per molecule and cut
off smoothly at ``cutoff``.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field
from torch import nn
from torch.nn.utils import parameters_to_vector, vector_to_parameters

from utils.errors import CoincidentAtomsError

logger = logging.getLogger(__name__)

MAX_ATOMIC_NUMBER = 100
VECTOR_EPS = 1e-12


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    layers: int = Field(3, ge=0)
    features: int = Field(32, ge=2)
    rbf: int = Field(16, ge=1)
    cutoff: float = Field(5.0, gt=0.0)


@dataclass
class ModelOutput:
    noise: torch.Tensor
    prop: torch.Tensor
    u: torch.Tensor
    v: torch.Tensor


def _init_linear(layer: nn.Linear) -> nn.Linear:
    bound = 1.0 / np.sqrt(layer.in_features)
    nn.init.uniform_(layer.weight, -bound, bound)
    if layer.bias is not None:
        nn.init.zeros_(layer.bias)
    return layer


def linear(n_in: int, n_out: int, bias: bool = True) -> nn.Linear:
    return _init_linear(nn.Linear(n_in, n_out, bias=bias))


class CosineCutoff(nn.Module):
    def __init__(self, cutoff: float):
        super().__init__()
        self.cutoff = cutoff

    def forward(self, distances: torch.Tensor) -> torch.Tensor:
        phi = 0.5 * (torch.cos(distances * np.pi / self.cutoff) + 1.0)
        return phi * (distances < self.cutoff).to(distances.dtype)


class GaussianRBF(nn.Module):
    def __init__(self, count: int, cutoff: float):
        super().__init__()
        centers = torch.linspace(0.0, cutoff, count, dtype=torch.float64)
        spacing = cutoff / max(count - 1, 1)
        self.register_buffer("centers", centers)
        self.coeff = -0.5 / spacing**2

    def forward(self, distances: torch.Tensor) -> torch.Tensor:
        return torch.exp(self.coeff * (distances.unsqueeze(-1) - self.centers) ** 2)


class NeighborEmbedding(nn.Module):
    """Atom embedding plus the radially filtered sum of neighbor embeddings."""

    def __init__(self, features: int, rbf: int):
        super().__init__()
        self.atom = nn.Embedding(MAX_ATOMIC_NUMBER, features)
        self.neighbor = nn.Embedding(MAX_ATOMIC_NUMBER, features)
        nn.init.uniform_(self.atom.weight, -0.1, 0.1)
        nn.init.uniform_(self.neighbor.weight, -0.1, 0.1)
        self.filter = linear(rbf, features)

    def forward(self, z: torch.Tensor, rbf: torch.Tensor, weight: torch.Tensor) -> torch.Tensor:
        filtered = self.filter(rbf) * weight.unsqueeze(-1)
        return self.atom(z) + torch.einsum("ijf,jf->if", filtered, self.neighbor(z))


class AttentionLayer(nn.Module):
    def __init__(self, features: int, rbf: int):
        super().__init__()
        self.features = features
        self.w_q = linear(features, features)
        self.w_k = linear(features, features)
        self.w_v = linear(features, 3 * features)
        self.filter_k = linear(rbf, features)
        self.filter_v = linear(rbf, 3 * features)
        self.vec_proj = linear(features, 3 * features, bias=False)
        self.out = linear(features, 3 * features)
        self.norm_u = nn.LayerNorm(features)
        self.gain_v = nn.Parameter(torch.ones(features))
        self.act = nn.SiLU()

    def forward(self, u, v, rbf, phi, rhat):
        f = self.features
        d1 = self.act(self.filter_k(rbf))
        d2 = self.act(self.filter_v(rbf))

        # ascending channel sum inside einsum
        scores = torch.einsum("if,jf,ijf->ij", self.w_q(u), self.w_k(u), d1)
        attention = self.act(scores) * phi

        values = self.w_v(u).unsqueeze(0) * d2 * phi.unsqueeze(-1)
        s1, s2, s3 = torch.split(values, f, dim=-1)

        y = self.out(torch.einsum("ij,ijf->if", attention, s3))
        q1, q2, q3 = torch.split(y, f, dim=-1)

        vec1, vec2, vec3 = torch.split(self.vec_proj(v), f, dim=-1)
        du = q1 + q2 * (vec1 * vec2).sum(dim=1)
        dv = (
            torch.einsum("ijf,jxf->ixf", s1, v)
            + torch.einsum("ijf,ijx->ixf", s2, rhat)
            + q3.unsqueeze(1) * vec3
        )

        u = self.norm_u(u + du)
        v = v + dv
        scale = torch.sqrt((v**2).sum(dim=1, keepdim=True) + VECTOR_EPS)
        v = self.gain_v * v / scale
        return u, v


class GatedEquivariantBlock(nn.Module):
    """Scalars gate a linear map of the vectors; the gate sees the vector norms."""

    def __init__(self, features: int, out_features: int, scalar_activation: bool = False):
        super().__init__()
        self.out_features = out_features
        self.norm_proj = linear(features, features, bias=False)
        self.vec_proj = linear(features, out_features, bias=False)
        self.update = nn.Sequential(linear(2 * features, features), nn.SiLU(), linear(features, 2 * out_features))
        self.act = nn.SiLU() if scalar_activation else None

    def forward(self, u, v):
        norms = torch.sqrt((self.norm_proj(v) ** 2).sum(dim=1) + VECTOR_EPS)
        scalar, gate = torch.split(self.update(torch.cat([u, norms], dim=-1)), self.out_features, dim=-1)
        if self.act is not None:
            scalar = self.act(scalar)
        return scalar, gate.unsqueeze(1) * self.vec_proj(v)


class NoiseHead(nn.Module):
    """Two gated blocks down to one vector channel: a 3-vector per atom."""

    def __init__(self, features: int):
        super().__init__()
        hidden = features // 2
        self.first = GatedEquivariantBlock(features, hidden, scalar_activation=True)
        self.second = GatedEquivariantBlock(hidden, 1)

    def forward(self, u, v):
        scalar, vec = self.first(u, v)
        _, vec = self.second(scalar, vec)
        return vec.squeeze(-1)


class PropertyHead(nn.Module):
    def __init__(self, features: int):
        super().__init__()
        self.mlp = nn.Sequential(linear(features, features // 2), nn.SiLU(), linear(features // 2, 1))

    def forward(self, u: torch.Tensor) -> torch.Tensor:
        return self.mlp(u).sum()


class EquivariantTransformer(nn.Module):
    def __init__(self, config: Optional[ModelConfig] = None):
        super().__init__()
        self.config = config or ModelConfig()
        c = self.config
        self.rbf = GaussianRBF(c.rbf, c.cutoff)
        self.cutoff = CosineCutoff(c.cutoff)
        self.embedding = NeighborEmbedding(c.features, c.rbf)
        self.layers = nn.ModuleList([AttentionLayer(c.features, c.rbf) for _ in range(c.layers)])
        self.noise_head = NoiseHead(c.features)
        self.prop_head = PropertyHead(c.features)
        self.to(torch.float64)

    def encode(self, z: torch.Tensor, pos: torch.Tensor):
        n = pos.shape[0]
        diff = pos.unsqueeze(0) - pos.unsqueeze(1)  # r_j - r_i at [i, j]
        off_diag = ~torch.eye(n, dtype=torch.bool)
        sq = (diff**2).sum(-1)
        coincident = (sq == 0) & off_diag
        if bool(coincident.any()):
            i, j = (int(k) for k in torch.nonzero(coincident)[0])
            raise CoincidentAtomsError(i, j)
        safe_sq = torch.where(off_diag, sq, torch.ones_like(sq))
        dist = torch.sqrt(safe_sq)
        mask = off_diag.to(pos.dtype)
        rhat = diff / dist.unsqueeze(-1) * mask.unsqueeze(-1)
        rbf = self.rbf(dist)
        phi = self.cutoff(dist) * mask

        u = self.embedding(z, rbf, phi)
        v = torch.zeros(n, 3, self.config.features, dtype=pos.dtype)
        for layer in self.layers:
            u, v = layer(u, v, rbf, phi, rhat)
        return u, v

    def forward(self, z: torch.Tensor, pos: torch.Tensor) -> ModelOutput:
        u, v = self.encode(z, pos)
        return ModelOutput(noise=self.noise_head(u, v), prop=self.prop_head(u), u=u, v=v)


def build_model(config: Optional[ModelConfig] = None, seed: int = 0) -> EquivariantTransformer:
    torch.manual_seed(seed)
    return EquivariantTransformer(config)


def flat_parameters(model: nn.Module) -> np.ndarray:
    return parameters_to_vector(model.parameters()).detach().cpu().numpy().copy()


def load_flat_parameters(model: nn.Module, vector: np.ndarray) -> None:
    expected = sum(p.numel() for p in model.parameters())
    if vector.size != expected:
        raise ValueError(f"Parameter vector has {vector.size} entries, model expects {expected}")
    with torch.no_grad():
        vector_to_parameters(torch.as_tensor(vector, dtype=torch.float64), model.parameters())
