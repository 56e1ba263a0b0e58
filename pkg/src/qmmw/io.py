"""Game specification files (JSON).

Matrices live on the full product space and are written row-major as nested
lists of ``[re, im]`` pairs. Floats are emitted with ``repr`` precision, so a
load/dump round trip is exact.

Example::

    {
      "players": [2, 2],
      "form": "povm",
      "zero_sum": true,
      "povm": [[[[1, 0], [0, 0], ...], ...], ...],
      "payoffs": [[1, -1], [-1, 1], ...],
      "equilibrium": [[[[0.5, 0], [0, 0]], [[0, 0], [0.5, 0]]], ...]
    }
"""

import json

import numpy as np

from .game import QuantumGame
from .hermitian import ValidationError


def matrix_to_pairs(m):
    m = np.asarray(m, dtype=np.complex128)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def pairs_to_matrix(rows, name="matrix"):
    try:
        arr = np.asarray(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name}: entries must be [re, im] pairs") from exc
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name}: expected a square array of [re, im] pairs, got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def game_to_dict(game):
    doc = {"players": list(game.dims), "form": "povm" if game.is_povm else "observables",
           "zero_sum": bool(game.zero_sum)}
    if game.name:
        doc["name"] = game.name
    if game.is_povm:
        doc["povm"] = [matrix_to_pairs(p) for p in game.povm]
        doc["payoffs"] = [[float(u) for u in row] for row in game.payoffs]
    else:
        doc["observables"] = [matrix_to_pairs(w) for w in game.observables]
    if game.equilibrium is not None:
        doc["equilibrium"] = [matrix_to_pairs(x) for x in game.equilibrium]
    return doc


def game_from_dict(doc):
    try:
        dims = [int(d) for d in doc["players"]]
        form = doc.get("form", "povm")
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"game spec needs a 'players' list of dimensions: {exc}") from exc
    eq = doc.get("equilibrium")
    if eq is not None:
        eq = [pairs_to_matrix(x, f"equilibrium[{i}]") for i, x in enumerate(eq)]
    zero_sum = bool(doc.get("zero_sum", False))
    name = str(doc.get("name", ""))
    if form == "povm":
        if "povm" not in doc or "payoffs" not in doc:
            raise ValidationError("POVM-form spec needs 'povm' and 'payoffs'")
        povm = [pairs_to_matrix(p, f"povm[{w}]") for w, p in enumerate(doc["povm"])]
        return QuantumGame.from_povm(dims, povm, doc["payoffs"], zero_sum, name, eq)
    if form == "observables":
        if "observables" not in doc:
            raise ValidationError("observable-form spec needs 'observables'")
        obs = [pairs_to_matrix(w, f"observables[{i}]") for i, w in enumerate(doc["observables"])]
        return QuantumGame.from_observables(dims, obs, zero_sum, name, eq)
    raise ValidationError(f"unknown form {form!r}; expected 'povm' or 'observables'")


def dumps_game(game):
    return json.dumps(game_to_dict(game), indent=1, sort_keys=True)


def loads_game(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"game spec is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError("game spec must be a JSON object")
    return game_from_dict(doc)


def save_game(game, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_game(game))
        fh.write("\n")


def load_game(path):
    with open(path, encoding="utf-8") as fh:
        return loads_game(fh.read())


def games_equal(a, b, tol=1e-15):
    """Structural equality of two games up to ``tol`` per matrix entry."""
    if a.dims != b.dims or a.is_povm != b.is_povm or a.zero_sum != b.zero_sum:
        return False
    pairs = [(a.observables, b.observables)]
    if a.is_povm:
        if a.povm.shape != b.povm.shape:
            return False
        pairs += [(a.povm, b.povm), (a.payoffs, b.payoffs)]
    if (a.equilibrium is None) != (b.equilibrium is None):
        return False
    if a.equilibrium is not None:
        pairs += list(zip(a.equilibrium, b.equilibrium))
    return all(np.shape(x) == np.shape(y) and np.all(np.abs(np.asarray(x) - np.asarray(y)) <= tol)
               for x, y in pairs)
