"""Network container, parameter initialization, and frozen-weight inference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .neuron import EpisodeState, LifConfig, fused_input, membrane_step, spike
from .numerics import kaiming_uniform_init, make_rng
from .plasticity import MultiPathLayer, SbpParams, merge_weights

ETA_INIT = 0.01
# Centers the bounded nonlinearity: sigmoid(0) + beta = 0, so the Hebbian
# pathway has no weight drift at the resting potential. With beta = 0 the
# layer-1 recurrence grows all-positive until every membrane sits above the
# surrogate window and training stalls.
BETA_INIT = -0.5
LOCAL_PATH_INIT_SCALE = 0.1


@dataclass
class Network:
    layers: list[MultiPathLayer]
    lambda_f: np.ndarray  # 0-d, shared across layers
    lambda_p: np.ndarray  # 0-d
    lif: LifConfig
    sbp: SbpParams

    @property
    def layer_sizes(self) -> list[int]:
        return [self.layers[0].fan_in] + [layer.fan_out for layer in self.layers]

    @property
    def num_classes(self) -> int:
        return self.layers[-1].fan_out

    def sbp_params(self) -> SbpParams:
        """Current feedback constants with the learned fraction factors."""
        return SbpParams(
            lambda_f=float(self.lambda_f),
            lambda_p=float(self.lambda_p),
            tau_w=self.sbp.tau_w,
            delta_includes_decay=self.sbp.delta_includes_decay,
        )

    def named_parameters(self) -> dict[str, np.ndarray]:
        """Gradient-updated parameters, keyed by checkpoint entry name."""
        params: dict[str, np.ndarray] = {}
        for idx, layer in enumerate(self.layers):
            params[f"layers.{idx}.w1"] = layer.w1
            params[f"layers.{idx}.lam"] = layer.lam
            params[f"layers.{idx}.eta"] = layer.eta
            params[f"layers.{idx}.beta"] = layer.beta
        params["lambda_f"] = self.lambda_f
        params["lambda_p"] = self.lambda_p
        return params


def init_network(
    layer_sizes: list[int],
    seed: int,
    lif: LifConfig,
    sbp: SbpParams,
    lambda_init: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3),
    eta_init: float = ETA_INIT,
    beta_init: float = BETA_INIT,
    zero_weights: bool = False,
) -> Network:
    """Build a fresh network. W1 gets kaiming-uniform init; the local-rule
    pathways W2/W3 start at a tenth of that scale (their recurrences then
    take over). zero_weights=True zeroes all three pathways (test fixture).
    """
    if len(layer_sizes) < 2:
        raise ValueError("layer_sizes needs at least an input and an output size")
    rng = make_rng(seed)
    layers = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        if zero_weights:
            w1 = np.zeros((fan_out, fan_in))
            w2 = np.zeros((fan_out, fan_in))
            w3 = np.zeros((fan_out, fan_in))
        else:
            w1 = kaiming_uniform_init(rng, fan_in, fan_out, fan_in)
            w2 = LOCAL_PATH_INIT_SCALE * kaiming_uniform_init(rng, fan_in, fan_out, fan_in)
            w3 = LOCAL_PATH_INIT_SCALE * kaiming_uniform_init(rng, fan_in, fan_out, fan_in)
        layers.append(
            MultiPathLayer(
                w1=w1,
                w2=w2,
                w3=w3,
                lam=np.array(lambda_init, dtype=np.float64),
                eta=np.array(eta_init, dtype=np.float64),
                beta=np.array(beta_init, dtype=np.float64),
            )
        )
    return Network(
        layers=layers,
        lambda_f=np.array(sbp.lambda_f, dtype=np.float64),
        lambda_p=np.array(sbp.lambda_p, dtype=np.float64),
        lif=lif,
        sbp=sbp,
    )


def forward_inference(
    net: Network, x: np.ndarray, t_steps: int, merged: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Frozen-weight forward over the window; no plasticity updates.

    x is [batch x input_dim]; the input drives layer 1 at every timestep.
    Returns (per-class spike counts [batch x classes],
             penultimate-layer membrane potentials at the final timestep).
    When merged=True each layer uses its single collapsed matrix, otherwise
    the three pathways are evaluated separately.
    """
    batch = x.shape[0]
    lif = net.lif
    merged_w = [merge_weights(layer) for layer in net.layers] if merged else None
    u = [np.zeros((batch, layer.fan_out)) for layer in net.layers]
    s = [np.zeros((batch, layer.fan_out)) for layer in net.layers]
    counts = np.zeros((batch, net.num_classes))
    for _t in range(t_steps):
        s_in = x
        for idx, layer in enumerate(net.layers):
            if merged:
                i_in = s_in @ merged_w[idx].T
            else:
                i_in = fused_input(layer, s_in)
            u[idx] = membrane_step(u[idx], s[idx], i_in, lif)
            s[idx] = spike(u[idx], lif)
            s_in = s[idx]
        counts += s[-1]
    penultimate_u = u[-2] if len(net.layers) >= 2 else u[-1]
    return counts, penultimate_u


def record_episode(net: Network, x: np.ndarray, t_steps: int, merged: bool) -> EpisodeState:
    """Frozen-weight forward that keeps every timestep's U, S and I traces."""
    batch = x.shape[0]
    lif = net.lif
    merged_w = [merge_weights(layer) for layer in net.layers] if merged else None
    u_prev = [np.zeros((batch, layer.fan_out)) for layer in net.layers]
    s_prev = [np.zeros((batch, layer.fan_out)) for layer in net.layers]
    episode = EpisodeState(u=[], s=[], i=[])
    for _t in range(t_steps):
        episode.u.append([])
        episode.s.append([])
        episode.i.append([])
        s_in = x
        for idx, layer in enumerate(net.layers):
            if merged:
                i_in = s_in @ merged_w[idx].T
            else:
                i_in = fused_input(layer, s_in)
            u_new = membrane_step(u_prev[idx], s_prev[idx], i_in, lif)
            s_new = spike(u_new, lif)
            episode.i[-1].append(i_in)
            episode.u[-1].append(u_new)
            episode.s[-1].append(s_new)
            u_prev[idx], s_prev[idx] = u_new, s_new
            s_in = s_new
    return episode
