"""Element data types understood by the generator and the oracle."""

from __future__ import annotations

import re
from dataclasses import dataclass

_FIXED_RE = re.compile(r"^fixed<\s*(\d+)\s*,\s*(\d+)\s*>$")


@dataclass(frozen=True)
class DataType:
    kind: str = "float32"  # float32 | fixed | opaque
    total_bits: int = 0
    int_bits: int = 0
    type_string: str = ""

    @classmethod
    def parse(cls, text: str) -> "DataType":
        """Accepts ``float32``, ``fixed<W,I>`` or ``opaque:<c type>``."""
        text = text.strip()
        if text == "float32":
            return cls()
        m = _FIXED_RE.match(text)
        if m:
            total, integer = int(m.group(1)), int(m.group(2))
            if not 1 <= integer <= total <= 64:
                raise ValueError(f"fixed<{total},{integer}> needs 1 <= int_bits <= total_bits <= 64")
            return cls("fixed", total, integer)
        if text.startswith("opaque:") and text[len("opaque:"):].strip():
            return cls("opaque", type_string=text[len("opaque:"):].strip())
        raise ValueError(f"unknown data type {text!r}")

    def __str__(self) -> str:
        if self.kind == "fixed":
            return f"fixed<{self.total_bits},{self.int_bits}>"
        if self.kind == "opaque":
            return f"opaque:{self.type_string}"
        return "float32"

    @property
    def frac_bits(self) -> int:
        return self.total_bits - self.int_bits

    @property
    def storage_bits(self) -> int:
        """Bits per stored element (opaque types are assumed to be 32 bits)."""
        return self.total_bits if self.kind == "fixed" else 32

    @property
    def checkable(self) -> bool:
        return self.kind != "opaque"

    def c_type(self) -> str:
        if self.kind == "fixed":
            return f"ap_fixed<{self.total_bits}, {self.int_bits}>"
        if self.kind == "opaque":
            return self.type_string
        return "float"

    def quantize(self, values):
        """Round values onto the type's representable grid (numpy in, numpy out)."""
        import numpy as np

        values = np.asarray(values, dtype=np.float64)
        if self.kind == "float32":
            return values.astype(np.float32).astype(np.float64)
        if self.kind == "fixed":
            step = 2.0 ** -self.frac_bits
            return np.floor(values / step) * step
        return values

    def tolerance(self, ops_count: int = 1) -> float:
        if self.kind == "float32":
            return 1e-4
        if self.kind == "fixed":
            return max(ops_count, 1) * 2.0 ** -self.frac_bits
        raise ValueError("opaque data types have no oracle tolerance")


FLOAT32 = DataType()
