"""Pointer-tracking JSON access used by the file loaders.

Wraps a parsed JSON value together with the file path and a JSON-pointer
string, so schema violations surface as FileFormatError naming the exact
offending field.
"""

from __future__ import annotations

import json

from .errors import FileFormatError

_TYPE_NAMES = {
    dict: "object",
    list: "array",
    str: "string",
    int: "integer",
    float: "number",
    bool: "boolean",
    type(None): "null",
}


class JsonCursor:
    def __init__(self, value, path, pointer=""):
        self.value = value
        self.path = path
        self.pointer = pointer or "/"

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise FileFormatError(path, "/", f"cannot read file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise FileFormatError(path, "/", f"invalid JSON: {exc}") from exc
        return cls(data, path)

    def fail(self, message):
        raise FileFormatError(self.path, self.pointer, message)

    def _child_pointer(self, key):
        base = "" if self.pointer == "/" else self.pointer
        return f"{base}/{key}"

    def child(self, key):
        """Descend into a dict key or list index, failing if absent."""
        if isinstance(self.value, dict):
            if key not in self.value:
                raise FileFormatError(self.path, self._child_pointer(key), "missing required key")
            return JsonCursor(self.value[key], self.path, self._child_pointer(key))
        if isinstance(self.value, list):
            idx = int(key)
            if not 0 <= idx < len(self.value):
                raise FileFormatError(self.path, self._child_pointer(idx),
                                      f"index out of range (length {len(self.value)})")
            return JsonCursor(self.value[idx], self.path, self._child_pointer(idx))
        self.fail(f"expected an object or array, found {_TYPE_NAMES.get(type(self.value), '?')}")

    def get(self, key, default=None):
        """Optional dict key; returns (cursor or None)."""
        if not isinstance(self.value, dict):
            self.fail("expected an object")
        if key not in self.value or self.value[key] is None:
            return default
        return JsonCursor(self.value[key], self.path, self._child_pointer(key))

    def expect(self, typ, what):
        ok = isinstance(self.value, typ)
        if typ is float:
            ok = isinstance(self.value, (int, float)) and not isinstance(self.value, bool)
        if typ is int:
            ok = isinstance(self.value, int) and not isinstance(self.value, bool)
        if not ok:
            self.fail(f"expected {what}, found {_TYPE_NAMES.get(type(self.value), '?')}")
        return self

    def as_int(self):
        self.expect(int, "an integer")
        return int(self.value)

    def as_float(self):
        self.expect(float, "a number")
        return float(self.value)

    def as_str(self):
        self.expect(str, "a string")
        return str(self.value)

    def as_dict(self):
        self.expect(dict, "an object")
        return self.value

    def as_list(self, length=None):
        self.expect(list, "an array")
        if length is not None and len(self.value) != length:
            self.fail(f"expected {length} elements, found {len(self.value)}")
        return self.value

    def as_float_list(self, length=None):
        self.as_list(length)
        out = []
        for i in range(len(self.value)):
            out.append(self.child(i).as_float())
        return out

    def items(self):
        self.expect(list, "an array")
        return [JsonCursor(v, self.path, self._child_pointer(i)) for i, v in enumerate(self.value)]
