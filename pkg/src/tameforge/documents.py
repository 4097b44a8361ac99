"""JSON documents for maps, words, and certificates.

Formats are canonical: fixed key order, two-space indentation, one trailing
newline.  Dumping a loaded document reproduces it byte for byte, because
element and polynomial printing are canonical and re-parse to equal values.
"""
from __future__ import annotations

import json
from typing import Any

from .automap import Certificate, ElemGen, LinGen, PolyMap, TameWord, TransGen
from .errors import ParseError
from .multipoly import parse_poly
from .rings import RingSpec, parse_elem, parse_ring_spec


def dumps_doc(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def loads_doc(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON document: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("document root must be an object")
    return doc


def _field(doc: dict, key: str) -> Any:
    if key not in doc:
        raise ParseError(f"document is missing field {key!r}")
    return doc[key]


# maps -----------------------------------------------------------------------


def map_to_doc(m: PolyMap) -> dict:
    return {
        "ring": m.spec.spec_str(),
        "vars": list(m.vars),
        "coords": [str(c) for c in m.coords],
    }


def map_from_doc(doc: dict) -> PolyMap:
    spec = parse_ring_spec(_field(doc, "ring"))
    vars = tuple(_field(doc, "vars"))
    coords = _field(doc, "coords")
    if len(coords) != len(vars):
        raise ParseError(f"{len(coords)} coords for {len(vars)} vars")
    return PolyMap.from_strings(spec, vars, coords)


# words ----------------------------------------------------------------------


def gen_to_doc(gen, spec: RingSpec) -> dict:
    if isinstance(gen, ElemGen):
        return {"kind": "elementary", "i": gen.var, "f": str(gen.poly)}
    if isinstance(gen, LinGen):
        return {
            "kind": "linear",
            "matrix": [[spec.elem_str(x) for x in row] for row in gen.matrix],
        }
    if isinstance(gen, TransGen):
        return {"kind": "translation", "v": [spec.elem_str(x) for x in gen.vector]}
    raise TypeError(f"not a tame generator: {gen!r}")


def gen_from_doc(doc: dict, spec: RingSpec, vars: tuple[str, ...]):
    kind = _field(doc, "kind")
    if kind == "elementary":
        return ElemGen(_field(doc, "i"), parse_poly(spec, vars, _field(doc, "f")))
    if kind == "linear":
        matrix = [
            [parse_elem(spec, x).payload for x in row] for row in _field(doc, "matrix")
        ]
        return LinGen(spec, matrix)
    if kind == "translation":
        return TransGen(spec, [parse_elem(spec, x).payload for x in _field(doc, "v")])
    raise ParseError(f"unknown generator kind {kind!r}")


def word_to_doc(w: TameWord) -> dict:
    return {
        "ring": w.spec.spec_str(),
        "vars": list(w.vars),
        "word": [gen_to_doc(g, w.spec) for g in w.gens],
    }


def word_from_doc(doc: dict) -> TameWord:
    spec = parse_ring_spec(_field(doc, "ring"))
    vars = tuple(_field(doc, "vars"))
    gens = [gen_from_doc(g, spec, vars) for g in _field(doc, "word")]
    return TameWord(spec, vars, gens)


# certificates ---------------------------------------------------------------


def cert_to_doc(c: Certificate) -> dict:
    return {
        "ring": c.target.spec.spec_str(),
        "dim": len(c.target.vars),
        "vars": list(c.target.vars),
        "stabilizeBy": c.stabilize_by,
        "wordVars": list(c.word.vars),
        "target": [str(p) for p in c.target.coords],
        "word": [gen_to_doc(g, c.word.spec) for g in c.word.gens],
        "provenance": c.provenance,
    }


def cert_from_doc(doc: dict) -> Certificate:
    spec = parse_ring_spec(_field(doc, "ring"))
    vars = tuple(_field(doc, "vars"))
    if len(vars) != _field(doc, "dim"):
        raise ParseError("dim does not match the variable list")
    word_vars = tuple(_field(doc, "wordVars"))
    if word_vars[: len(vars)] != vars:
        raise ParseError("wordVars must extend vars")
    if len(word_vars) - len(vars) != _field(doc, "stabilizeBy"):
        raise ParseError("stabilizeBy does not match wordVars")
    target = PolyMap.from_strings(spec, vars, _field(doc, "target"))
    gens = [gen_from_doc(g, spec, word_vars) for g in _field(doc, "word")]
    word = TameWord(spec, word_vars, gens)
    return Certificate(target, word_vars[len(vars):], word, _field(doc, "provenance"))


# file helpers ---------------------------------------------------------------


def save_doc(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_doc(doc))


def load_doc(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return loads_doc(fh.read())
