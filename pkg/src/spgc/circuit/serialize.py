"""Model file format.

A model file is an uncompressed NumPy ``.npz`` archive:

``header``
    0-d unicode array holding a JSON object with ``format`` (``"spgc-circuit"``),
    ``version`` (1), ``spec`` (region graph hyperparameters), ``domains``,
    ``groups``, ``topology`` (regions as ``[kind, scope, K, children, rep,
    group, param]`` and the per-repetition variable permutations) and an
    ``extra`` object for the enclosing model (schema, layout kind, ...).
``param_000`` ... ``param_NNN``
    float64 logits in :attr:`Circuit.params` order.
``extra_<name>``
    optional float64 arrays of the enclosing model (e.g. the cardinality table).

Arrays are stored verbatim, so save/load round trips are bit-exact. Archive
members carry a fixed timestamp, so equal models give byte-identical files.
"""

from __future__ import annotations

import json
import zipfile

import numpy as np

from ..exceptions import ConfigurationError
from .structure import RegionGraphSpec

FORMAT = "spgc-circuit"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def save_circuit(path, circuit, extra: dict | None = None, arrays: dict | None = None):
    header = {
        "format": FORMAT,
        "version": VERSION,
        "spec": circuit.spec.to_dict(),
        "domains": circuit.domains.tolist(),
        "groups": list(circuit.groups),
        "topology": circuit.structure.topology(),
        "extra": extra or {},
    }
    payload = {"header": np.array(json.dumps(header, sort_keys=True))}
    for i, p in enumerate(circuit.params):
        payload[f"param_{i:03d}"] = np.asarray(p, dtype=np.float64)
    for name, a in (arrays or {}).items():
        payload[f"extra_{name}"] = np.asarray(a, dtype=np.float64)
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, a in payload.items():
            info = zipfile.ZipInfo(name + ".npy", date_time=_EPOCH)
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, a, allow_pickle=False)


def load_circuit(path):
    """Return ``(circuit, extra_header, extra_arrays)``."""
    from .circuit import Circuit

    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("format") != FORMAT:
            raise ConfigurationError(f"{path} is not a {FORMAT} file")
        if header.get("version") != VERSION:
            raise ConfigurationError(f"unsupported model file version {header.get('version')}")
        spec = RegionGraphSpec.from_dict(header["spec"])
        circuit = Circuit(spec, header["domains"], header["groups"])
        if circuit.structure.topology() != header["topology"]:
            raise ConfigurationError("stored topology does not match the rebuilt region graph")
        n = len(circuit.params)
        circuit.set_params([z[f"param_{i:03d}"] for i in range(n)])
        arrays = {k[len("extra_") :]: z[k] for k in z.files if k.startswith("extra_")}
    return circuit, header["extra"], arrays
