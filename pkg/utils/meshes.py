import json
import os
from dataclasses import dataclass, field

from src.complex import agglomerate, build_cells, build_simplicial
from src.exceptions import FeecError, MeshFormatError
from src.tensorfes import product_complex
from src.utils import rational_str, to_rational

data_base = "./data/meshes"

mesh_keys = {"dimension", "vertices", "simplices", "cells", "orders", "name", "factors"}
cell_keys = {"id", "simplices", "support", "dim", "meta", "factors"}
orders_keys = {"family", "default", "per_cell", "drop"}


@dataclass
class MeshData:
    """
    A complex read from a mesh file, with the optional order
    specification stored next to it.
    """

    complex: object
    orders: dict = None
    source: str = None
    raw: dict = field(default=None, repr=False)


def _require(condition, message):
    if not condition:
        raise MeshFormatError(message)


def check_orders(orders):
    _require(isinstance(orders, dict), "Orders must be a JSON object.")
    unknown = set(orders) - orders_keys
    _require(not unknown, "Unknown order keys {}".format(sorted(unknown)))
    family = orders.get("family", "trimmed")
    _require(family in ("trimmed", "polynomial"), "Unknown order family {}".format(family))
    for key in ("default", "drop"):
        if key in orders:
            _require(isinstance(orders[key], int), "Order {} must be an integer".format(key))
    per_cell = orders.get("per_cell", {})
    _require(isinstance(per_cell, dict), "per_cell must map cell ids to integers.")
    _require(
        all(isinstance(v, int) for v in per_cell.values()),
        "per_cell must map cell ids to integers.",
    )
    return dict(orders, family=family)


def parse_mesh(data, name=None):
    """
    Builds a complex from the parsed content of a mesh file.

    Simplicial meshes give ``vertices`` and top ``simplices``. Optional
    ``cells`` either group top simplices (by position in ``simplices``)
    into agglomerated cells, or list every cell with an explicit
    ``support`` of simplices given by vertex ids. A product mesh gives
    ``factors``: a pair of meshes.
    """
    _require(isinstance(data, dict), "A mesh file holds a JSON object.")
    unknown = set(data) - mesh_keys
    _require(not unknown, "Unknown mesh keys {}".format(sorted(unknown)))
    name = data.get("name", name)
    try:
        if "factors" in data:
            factors = data["factors"]
            _require(
                isinstance(factors, list) and len(factors) == 2,
                "A product mesh has exactly two factors.",
            )
            first = parse_mesh(factors[0]).complex
            second = parse_mesh(factors[1]).complex
            cx = product_complex(first, second, name=name)
        else:
            _require("vertices" in data and "simplices" in data, "Missing vertices or simplices.")
            vertices = [[to_rational(x) for x in v] for v in data["vertices"]]
            if "dimension" in data:
                _require(
                    all(len(v) == data["dimension"] for v in vertices),
                    "Vertices do not have {} coordinates".format(data["dimension"]),
                )
            simplices = [list(s) for s in data["simplices"]]
            fine = build_simplicial(vertices, simplices, name=name)
            cx = fine
            if data.get("cells"):
                cx = _parse_cells(fine, simplices, data["cells"], name)
    except (TypeError, ValueError, KeyError) as err:
        if isinstance(err, FeecError):
            raise
        raise MeshFormatError("Malformed mesh: {}".format(err)) from None
    orders = check_orders(data["orders"]) if "orders" in data else None
    return MeshData(cx, orders, name, data)


def _parse_cells(fine, simplices, cells, name):
    for c in cells:
        _require(isinstance(c, dict) and "id" in c, "Every cell needs an id.")
        unknown = set(c) - cell_keys
        _require(not unknown, "Unknown cell keys {}".format(sorted(unknown)))
    if all("support" in c for c in cells):
        supports = [
            (str(c["id"]), [tuple(s) for s in c["support"]], c.get("meta", {}))
            for c in cells
        ]
        return build_cells(fine, supports, name=name)
    _require(
        all("simplices" in c for c in cells),
        "Cells either all group simplices or all carry supports.",
    )
    groups = [(str(c["id"]), [simplices[int(i)] for i in c["simplices"]]) for c in cells]
    return agglomerate(fine, groups, name=name)


def load_mesh(path):
    """
    Reads a mesh file, or a bundled fixture when ``path`` names one.
    """
    if not os.path.exists(path) and path in fixture_names():
        path = os.path.join(data_base, path + ".json")
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as err:
        raise MeshFormatError("{} is not valid JSON: {}".format(path, err)) from None
    except OSError as err:
        raise MeshFormatError("Cannot read {}: {}".format(path, err)) from None
    name = os.path.splitext(os.path.basename(path))[0]
    out = parse_mesh(data, name)
    out.source = path
    return out


def load_orders(path):
    try:
        with open(path) as f:
            return check_orders(json.load(f))
    except json.JSONDecodeError as err:
        raise MeshFormatError("{} is not valid JSON: {}".format(path, err)) from None
    except OSError as err:
        raise MeshFormatError("Cannot read {}: {}".format(path, err)) from None


def fixture_names():
    if not os.path.isdir(data_base):
        return []
    return sorted(f[:-5] for f in os.listdir(data_base) if f.endswith(".json"))


def _json_meta(meta):
    out = {}
    for key, value in meta.items():
        if isinstance(value, (tuple, list)):
            out[key] = [list(v) if isinstance(v, tuple) else v for v in value]
        elif isinstance(value, (str, int, float, bool)) or value is None:
            out[key] = value
    return out


def mesh_to_dict(complex_):
    """
    Mesh file content of a complex. Complexes of several pieces per cell
    are written with explicit supports in their underlying simplicial
    complex, and product complexes through their factors.
    """
    if len(complex_.factors) != 1:
        if hasattr(complex_, "factor_complexes"):
            return {
                "name": complex_.name,
                "factors": [mesh_to_dict(c) for c in complex_.factor_complexes],
            }
        raise MeshFormatError("Only simplicial, explicit support and product complexes export.")
    fine = complex_.fine or complex_
    tops = [fine.simplex(c) for c in fine.cells_of_dim(fine.dim)]
    out = {
        "dimension": fine.ambient_dim,
        "vertices": [[rational_str(x) for x in v] for v in fine.factors[0]],
        "simplices": [list(s) for s in tops],
    }
    if complex_.name:
        out["name"] = complex_.name
    if complex_.fine is not None:
        cells = []
        for c in complex_:
            entry = {
                "id": c.id,
                "dim": c.dim,
                "support": [list(p[0]) for p in c.pieces],
            }
            meta = _json_meta(c.meta)
            if meta:
                entry["meta"] = meta
            cells.append(entry)
        out["cells"] = cells
    return out


def structured_square(n, name=None):
    """
    Unit square cut into n x n squares, each split along its diagonal.
    """
    vertices = [["{}/{}".format(i, n), "{}/{}".format(j, n)] for j in range(n + 1) for i in range(n + 1)]
    simplices = []
    for j in range(n):
        for i in range(n):
            a = i + (n + 1) * j
            b, c, e = a + 1, a + n + 1, a + n + 2
            simplices.append([a, b, e])
            simplices.append([a, e, c])
    return build_simplicial(vertices, simplices, name=name or "square{}".format(n))


def uniform_interval(n, length=1, name=None):
    vertices = [["{}/{}".format(i * length, n)] for i in range(n + 1)]
    return build_simplicial(vertices, [[i, i + 1] for i in range(n)], name=name)


def graded_interval(n, ratio=2, name=None):
    """Interval [0, 1] whose cell lengths grow by ``ratio`` from left to right."""
    lengths = [ratio**i for i in range(n)]
    total = sum(lengths)
    points, x = [0], 0
    for h in lengths:
        x += h
        points.append(x)
    vertices = [["{}/{}".format(p, total)] for p in points]
    return build_simplicial(vertices, [[i, i + 1] for i in range(n)], name=name)
