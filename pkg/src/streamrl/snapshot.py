"""The .netsnap container: a JSON shape header followed by little-endian f64 data.

Layout on disk:

    [4-byte little-endian uint32: header length]
    [UTF-8 JSON header]
    [concatenated float64 little-endian section data]

The header lists named sections with their shapes plus a free-form metadata
object, so the same container carries bare parameter snapshots and full run
checkpoints (networks, scaler state, step counter).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .net import LayerSpec, Network

MAGIC_FORMAT = "netsnap"
FORMAT_VERSION = 1


def save_snapshot(path, sections: dict[str, np.ndarray], meta: dict | None = None):
    """Write named float64 arrays plus metadata to `path`."""
    path = Path(path)
    header = {
        "format": MAGIC_FORMAT,
        "version": FORMAT_VERSION,
        "sections": [
            {"name": name, "shape": list(np.asarray(arr).shape)}
            for name, arr in sections.items()
        ],
        "meta": meta or {},
    }
    header_bytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for arr in sections.values():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_snapshot(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a container back as ({name: array}, meta)."""
    path = Path(path)
    with open(path, "rb") as f:
        raw_len = f.read(4)
        if len(raw_len) != 4:
            raise ValueError(f"{path}: truncated header length")
        (header_len,) = struct.unpack("<I", raw_len)
        header = json.loads(f.read(header_len).decode("utf-8"))
        if header.get("format") != MAGIC_FORMAT:
            raise ValueError(f"{path}: not a netsnap file")
        sections = {}
        for entry in header["sections"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(f.read(count * 8), dtype="<f8", count=count)
            sections[entry["name"]] = data.astype(np.float64).reshape(shape)
    return sections, header.get("meta", {})


def network_meta(net: Network) -> dict:
    return {
        "layers": [
            {
                "input_width": s.input_width,
                "output_width": s.output_width,
                "has_layernorm": s.has_layernorm,
                "activation": s.activation,
            }
            for s in net.layers
        ],
        "eps_ln": net.eps_ln,
    }


def network_from_meta(meta: dict) -> Network:
    specs = [
        LayerSpec(
            input_width=entry["input_width"],
            output_width=entry["output_width"],
            has_layernorm=entry["has_layernorm"],
            activation=entry["activation"],
        )
        for entry in meta["layers"]
    ]
    return Network(specs, eps_ln=meta.get("eps_ln", 1e-8))


def save_network(path, net: Network):
    save_snapshot(path, {"params": net.params}, {"network": network_meta(net)})


def load_network(path) -> Network:
    sections, meta = load_snapshot(path)
    net = network_from_meta(meta["network"])
    net.params = sections["params"]
    return net
