"""Writes a small velocity network in the RCFLOWNN weight format plus parity
fixtures whose expected outputs come from a torch float64 forward pass.

Usage: python3 make_parity_fixtures.py [out_dir]
"""

import base64
import hashlib
import json
import struct
import sys
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

N_R, N_T = 4, 16
TEMB = 16
BASE = 8
N_FIXTURES = 24
SEED = 20240917


def graph():
    c, c2 = BASE, 2 * BASE
    return [
        {"kind": "linear", "name": "time1", "input": "temb", "in_features": TEMB, "out_features": 32, "weight": "time1.w", "bias": "time1.b"},
        {"kind": "silu", "name": "time1_act", "input": "time1"},
        {"kind": "linear", "name": "time_enc", "input": "time1_act", "in_features": 32, "out_features": 2 * c, "weight": "time_enc.w", "bias": "time_enc.b"},
        {"kind": "linear", "name": "time_mid", "input": "time1_act", "in_features": 32, "out_features": 2 * c2, "weight": "time_mid.w", "bias": "time_mid.b"},
        {"kind": "conv2d", "name": "stem", "input": "x", "in_ch": 2, "out_ch": c, "kernel": 3, "weight": "stem.w", "bias": "stem.b"},
        {"kind": "group_norm", "name": "enc_norm", "input": "stem", "channels": c, "groups": 4, "weight": "enc_norm.g", "bias": "enc_norm.b"},
        {"kind": "scale_shift", "name": "enc_mod", "input": "enc_norm", "cond": "time_enc"},
        {"kind": "silu", "name": "enc_act", "input": "enc_mod"},
        {"kind": "conv2d", "name": "enc_conv", "input": "enc_act", "in_ch": c, "out_ch": c, "kernel": 3, "weight": "enc_conv.w", "bias": "enc_conv.b"},
        {"kind": "add", "name": "enc_out", "inputs": ["enc_conv", "stem"]},
        {"kind": "downsample", "name": "down", "input": "enc_out", "in_ch": c, "out_ch": c2, "weight": "down.w", "bias": "down.b"},
        {"kind": "group_norm", "name": "mid_norm", "input": "down", "channels": c2, "groups": 8, "weight": "mid_norm.g", "bias": "mid_norm.b"},
        {"kind": "scale_shift", "name": "mid_mod", "input": "mid_norm", "cond": "time_mid"},
        {"kind": "gelu", "name": "mid_act", "input": "mid_mod"},
        {"kind": "conv2d", "name": "mid_conv", "input": "mid_act", "in_ch": c2, "out_ch": c2, "kernel": 3, "weight": "mid_conv.w", "bias": "mid_conv.b"},
        {"kind": "upsample", "name": "up", "input": "mid_conv"},
        {"kind": "conv2d", "name": "up_proj", "input": "up", "in_ch": c2, "out_ch": c, "kernel": 1, "weight": "up_proj.w", "bias": "up_proj.b"},
        {"kind": "concat", "name": "skip", "inputs": ["up_proj", "enc_out"]},
        {"kind": "conv2d", "name": "dec_conv", "input": "skip", "in_ch": 2 * c, "out_ch": c, "kernel": 3, "weight": "dec_conv.w", "bias": "dec_conv.b"},
        {"kind": "group_norm", "name": "dec_norm", "input": "dec_conv", "channels": c, "groups": 2, "weight": "dec_norm.g", "bias": "dec_norm.b"},
        {"kind": "silu", "name": "dec_act", "input": "dec_norm"},
        {"kind": "conv2d", "name": "head", "input": "dec_act", "in_ch": c, "out_ch": 2, "kernel": 1, "weight": "head.w"},
    ]


def tensor_shapes():
    c, c2 = BASE, 2 * BASE
    return [
        ("time1.w", (32, TEMB)), ("time1.b", (32,)),
        ("time_enc.w", (2 * c, 32)), ("time_enc.b", (2 * c,)),
        ("time_mid.w", (2 * c2, 32)), ("time_mid.b", (2 * c2,)),
        ("stem.w", (c, 2, 3, 3)), ("stem.b", (c,)),
        ("enc_norm.g", (c,)), ("enc_norm.b", (c,)),
        ("enc_conv.w", (c, c, 3, 3)), ("enc_conv.b", (c,)),
        ("down.w", (c2, c, 3, 3)), ("down.b", (c2,)),
        ("mid_norm.g", (c2,)), ("mid_norm.b", (c2,)),
        ("mid_conv.w", (c2, c2, 3, 3)), ("mid_conv.b", (c2,)),
        ("up_proj.w", (c, c2, 1, 1)), ("up_proj.b", (c,)),
        ("dec_conv.w", (c, 2 * c, 3, 3)), ("dec_conv.b", (c,)),
        ("dec_norm.g", (c,)), ("dec_norm.b", (c,)),
        ("head.w", (2, c, 1, 1)),
    ]


def init_weights(rng):
    weights = {}
    for name, shape in tensor_shapes():
        if name.endswith(".g"):
            w = 1.0 + 0.1 * rng.standard_normal(shape)
        elif name.endswith(".b") and "norm" in name:
            w = 0.1 * rng.standard_normal(shape)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
            w = rng.standard_normal(shape) / np.sqrt(fan_in)
        weights[name] = w.astype(np.float32)
    return weights


def encode_weight_file(weights):
    blob = bytearray()
    entries = []
    for name, shape in tensor_shapes():
        arr = np.ascontiguousarray(weights[name], dtype="<f4")
        entries.append({"name": name, "shape": list(shape), "offset": len(blob), "dtype": "f32"})
        blob += arr.tobytes()
    header = {
        "time_embed_dim": TEMB,
        "graph": graph(),
        "tensors": entries,
        "blob_sha256": hashlib.sha256(bytes(blob)).hexdigest(),
    }
    body = json.dumps(header).encode("utf-8")
    return b"RCFLOWNN" + bytes([1]) + struct.pack("<I", len(body)) + body + bytes(blob)


def embedding(t):
    k = torch.arange(TEMB // 2, dtype=torch.float64)
    freqs = 10000.0 ** (-2.0 * k / TEMB)
    return torch.cat([torch.sin(t * freqs), torch.cos(t * freqs)])


def forward(weights, h, t):
    """Reference forward pass in float64 using torch's own kernels."""
    w = {k: torch.from_numpy(v.astype(np.float64)) for k, v in weights.items()}
    x = torch.from_numpy(np.stack([h.real, h.imag]))[None]

    def mod(v, cond):
        scale, shift = cond.chunk(2)
        return v * (1 + scale[None, :, None, None]) + shift[None, :, None, None]

    temb = embedding(t)
    t1 = F.silu(F.linear(temb, w["time1.w"], w["time1.b"]))
    t_enc = F.linear(t1, w["time_enc.w"], w["time_enc.b"])
    t_mid = F.linear(t1, w["time_mid.w"], w["time_mid.b"])
    stem = F.conv2d(x, w["stem.w"], w["stem.b"], padding=1)
    e = F.group_norm(stem, 4, w["enc_norm.g"], w["enc_norm.b"], eps=1e-5)
    e = F.silu(mod(e, t_enc))
    enc_out = F.conv2d(e, w["enc_conv.w"], w["enc_conv.b"], padding=1) + stem
    d = F.conv2d(enc_out, w["down.w"], w["down.b"], stride=2, padding=1)
    m = F.group_norm(d, 8, w["mid_norm.g"], w["mid_norm.b"], eps=1e-5)
    m = F.gelu(mod(m, t_mid))
    m = F.conv2d(m, w["mid_conv.w"], w["mid_conv.b"], padding=1)
    u = F.interpolate(m, scale_factor=2, mode="nearest")
    u = F.conv2d(u, w["up_proj.w"], w["up_proj.b"])
    s = torch.cat([u, enc_out], dim=1)
    dec = F.conv2d(s, w["dec_conv.w"], w["dec_conv.b"], padding=1)
    dec = F.silu(F.group_norm(dec, 2, w["dec_norm.g"], w["dec_norm.b"], eps=1e-5))
    out = F.conv2d(dec, w["head.w"])[0].numpy()
    return out[0] + 1j * out[1]


def b64_complex(m):
    inter = np.empty(m.size * 2, dtype="<f8")
    inter[0::2] = m.real.ravel()
    inter[1::2] = m.imag.ravel()
    return base64.b64encode(inter.tobytes()).decode("ascii")


def main():
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
    rng = np.random.default_rng(SEED)
    weights = init_weights(rng)
    (out_dir / "toy_net.rcnn").write_bytes(encode_weight_file(weights))

    fixtures = []
    for k in range(N_FIXTURES):
        scale = [0.3, 1.0, 3.0][k % 3]
        h = scale * (rng.standard_normal((N_R, N_T)) + 1j * rng.standard_normal((N_R, N_T))) / np.sqrt(2)
        t = float(k) / (N_FIXTURES - 1)
        v = forward(weights, h, t)
        fixtures.append({"shape": [N_R, N_T], "input": b64_complex(h), "t": t, "expected": b64_complex(v)})
    (out_dir / "toy_net_fixtures.json").write_text(json.dumps(fixtures, indent=1) + "\n")


if __name__ == "__main__":
    main()
