"""HLS C++ source emission."""

from .bundle import (SourceBundle, SourceUnit, emit_build_script, emit_design, emit_kernel,
                     emit_testbench, write_bundle)
from .csim import compile_and_run

__all__ = ["SourceBundle", "SourceUnit", "compile_and_run", "emit_build_script", "emit_design",
           "emit_kernel", "emit_testbench", "write_bundle"]
