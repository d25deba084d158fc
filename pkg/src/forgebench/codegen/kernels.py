"""C++ templates for the kernel catalog.

Each template turns one OperatorSpec into a single free function whose array
arguments carry static bounds.  Element type is always ``data_t``; the
typedef lives in the design header.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..kernels.specs import (ActSpec, AttnSpec, ConvSpec, DropoutSpec, EltwiseSpec, LinearSpec,
                             MoveSpec, NormSpec, OperatorSpec, PoolSpec, RopeSpec)

IND = "    "


@dataclass(frozen=True)
class KernelCode:
    name: str
    prototype: str
    definition: str


def c_float(v: float) -> str:
    """Float literal that survives a round trip through float32."""
    s = format(float(v), ".9g")
    if not any(ch in s for ch in ".eEn"):
        s += ".0"
    return s + "f"


def c_double(v: float) -> str:
    s = format(float(v), ".17g")
    if not any(ch in s for ch in ".eEn"):
        s += ".0"
    return s


def array_param(name: str, shape, const: bool = False) -> str:
    dims = "".join(f"[{d}]" for d in shape)
    return f"{'const ' if const else ''}data_t {name}{dims}"


def index(name: str, idx) -> str:
    return name + "".join(f"[{i}]" for i in idx)


def unroll_factor(factor: int, bound: int) -> int:
    """Effective unroll factor: clamped to the trip count, 1 means no directive."""
    return min(factor, bound)


class _Writer:
    def __init__(self):
        self.lines: list[str] = []
        self.depth = 1

    def line(self, text: str = "") -> None:
        self.lines.append(IND * self.depth + text if text else "")

    def open(self, text: str) -> None:
        self.line(text + " {")
        self.depth += 1

    def close(self, count: int = 1) -> None:
        for _ in range(count):
            self.depth -= 1
            self.line("}")

    def loop(self, var: str, bound, start="0", unroll: int = 1) -> None:
        self.open(f"for (int {var} = {start}; {var} < {bound}; {var}++)")
        if unroll > 1:
            self.line(f"#pragma HLS unroll factor={unroll}")

    def text(self) -> str:
        return "\n".join(self.lines)


def _nest(w: _Writer, shape, prefix: str = "i") -> list[str]:
    vars_ = [f"{prefix}{d}" for d in range(len(shape))]
    for v, b in zip(vars_, shape):
        w.loop(v, b)
    return vars_


def _function(name: str, params: list[str], body: _Writer, pre: list[str] = ()) -> KernelCode:
    proto = f"void {name}({', '.join(params)})"
    parts = list(pre) + [proto + " {", body.text(), "}"]
    return KernelCode(name, proto + ";", "\n".join(parts) + "\n")


def _operand_params(spec: OperatorSpec) -> tuple[list[str], list[str], list[str]]:
    ins, outs = spec.operands()
    names_in = [n for n, _ in ins]
    names_out = [n for n, _ in outs]
    params = [array_param(n, s, const=True) for n, s in ins]
    params += [array_param(n, s) for n, s in outs]
    return params, names_in, names_out


# -- linear -----------------------------------------------------------------

def _mm_nest(w: _Writer, spec: LinearSpec, mul: str, bounds: dict, acc: str, a: str, b: str,
             bias: str | None, partitions: dict) -> None:
    """Emit out[i][j] (+)= a[i][k]*b[k][j] following spec.loop_order.

    ``acc``/``a``/``b`` are format strings over the loop variables i, j, k.
    Loops whose letter is absent from ``bounds`` are not emitted.
    """
    present = [v for v in "ij" if v in bounds]
    for v in present:
        w.loop(v, bounds[v])
    w.line(f"{acc} = {bias if bias else '0'};")
    w.close(len(present))

    factors = dict(zip("ijk", spec.unroll))
    for v in spec.loop_order:
        if v not in bounds:
            continue
        f = unroll_factor(factors[v], bounds[v])
        w.loop(v, bounds[v], unroll=f)
        if f > 1:
            for access in (acc, a, b):
                dim = _dim_of(access, v)
                if dim:
                    key = (access.split("[", 1)[0], dim)
                    partitions[key] = max(partitions.get(key, 1), f)
    term = f"{mul}({a}, {b})" if mul else f"{a} * {b}"
    w.line(f"{acc} += {term};")
    w.close(sum(1 for v in spec.loop_order if v in bounds))


def _dim_of(access: str, var: str) -> int:
    """1-based array dimension at which loop variable ``var`` indexes ``access``."""
    subs = [s.rstrip("]") for s in access.split("[")[1:]]
    return subs.index(var) + 1 if var in subs else 0


def _linear(spec: LinearSpec, name: str) -> KernelCode:
    params, _, _ = _operand_params(spec)
    mul = None if spec.inline_mul else f"{name}_mul"
    pre = []
    if mul:
        pre = [f"static data_t {mul}(data_t a, data_t b) {{",
               f"{IND}#pragma HLS inline off",
               f"{IND}return a * b;",
               "}", ""]
    w = _Writer()
    parts: dict = {}
    m, n, k = spec.m, spec.n, spec.k
    bias = spec.bias
    if spec.variant == "gemm":
        _mm_nest(w, spec, mul, {"i": m, "j": n, "k": k}, "C[i][j]", "A[i][k]", "B[k][j]",
                 "bias[j]" if bias else None, parts)
    elif spec.variant == "matvec":
        _mm_nest(w, spec, mul, {"i": m, "k": k}, "y[i]", "A[i][k]", "x[k]",
                 "bias[i]" if bias else None, parts)
    elif spec.variant == "dot":
        _mm_nest(w, spec, mul, {"k": k}, "out[0]", "x[k]", "y[k]",
                 "bias[0]" if bias else None, parts)
    else:
        _chain(w, spec, mul, parts)
    body = _Writer()
    arg_names = {n for n, _ in spec.operands()[0] + spec.operands()[1]}
    for (arr, dim), f in sorted(parts.items()):
        if arr in arg_names:
            body.line(f"#pragma HLS array_partition variable={arr} cyclic factor={f} dim={dim}")
    body.lines += w.lines
    return _function(name, params, body, pre)


# product list per parenthesization: (result, left, right, rows, inner, cols)
_CHAIN_PLANS = {
    "((xA)B)y": [("t1", "x", "A", "1", "m", "k"), ("t2", "t1", "B", "1", "k", "n"),
                 ("out", "t2", "y", "1", "n", "1")],
    "(xA)(By)": [("t1", "x", "A", "1", "m", "k"), ("t2", "B", "y", "k", "n", "1"),
                 ("out", "t1", "t2", "1", "k", "1")],
    "x((AB)y)": [("t1", "A", "B", "m", "k", "n"), ("t2", "t1", "y", "m", "n", "1"),
                 ("out", "x", "t2", "1", "m", "1")],
    "x(A(By))": [("t1", "B", "y", "k", "n", "1"), ("t2", "A", "t1", "m", "k", "1"),
                 ("out", "x", "t2", "1", "m", "1")],
}


def _chain(w: _Writer, spec: LinearSpec, mul, parts) -> None:
    dims = {"1": 1, "m": spec.m, "k": spec.k, "n": spec.n}
    plan = _CHAIN_PLANS[spec.assoc_order]
    for res, _, _, r, _, c in plan[:2]:
        w.line(f"data_t {res}[{dims[r]}][{dims[c]}];")
    for res, left, right, r, inner, c in plan:
        w.line(f"// {res} = {left} * {right}")
        _mm_nest(w, spec, mul, {"i": dims[r], "j": dims[c], "k": dims[inner]},
                 f"{res}[i][j]", f"{left}[i][k]", f"{right}[k][j]", None, parts)


# -- convolution ------------------------------------------------------------

def _conv(spec: ConvSpec, name: str) -> KernelCode:
    params, _, _ = _operand_params(spec)
    icg, ocg = spec.in_ch // spec.groups, spec.out_ch // spec.groups
    w = _Writer()
    uo = unroll_factor(spec.unroll_out, spec.out_ch)
    ui = unroll_factor(spec.unroll_in, icg)
    if uo > 1:
        w.line(f"#pragma HLS array_partition variable=w cyclic factor={uo} dim=1")
        w.line(f"#pragma HLS array_partition variable=y cyclic factor={uo} dim=1")
    if ui > 1:
        w.line(f"#pragma HLS array_partition variable=w cyclic factor={ui} dim=2")
    w.loop("oc", spec.out_ch)
    w.loop("oh", spec.out_h)
    w.loop("ow", spec.out_w)
    w.line(f"y[oc][oh][ow] = {'bias[oc]' if spec.bias else '0'};")
    w.close(3)
    w.loop("oh", spec.out_h)
    w.loop("ow", spec.out_w)
    w.loop("kh", spec.kernel)
    w.loop("kw", spec.kernel)
    w.line(f"int ih = oh * {spec.stride} + kh - {spec.padding};")
    w.line(f"int iw = ow * {spec.stride} + kw - {spec.padding};")
    if spec.padding:
        w.line(f"if (ih < 0 || ih >= {spec.h} || iw < 0 || iw >= {spec.w}) continue;")
    w.loop("oc", spec.out_ch, unroll=uo)
    w.loop("ic", icg, unroll=ui)
    w.line(f"y[oc][oh][ow] += w[oc][ic][kh][kw] * x[(oc / {ocg}) * {icg} + ic][ih][iw];")
    w.close(6)
    return _function(name, params, w)


# -- normalization ----------------------------------------------------------

def _norm(spec: NormSpec, name: str) -> KernelCode:
    params, names_in, _ = _operand_params(spec)
    eps = c_float(spec.epsilon)
    w = _Writer()
    shape = spec.shape
    has_g, has_b = "gamma" in names_in, "beta" in names_in
    if spec.norm == "batchnorm":
        idx = _nest(w, shape)
        el = index("x", idx)
        c = idx[0]
        w.line(f"float inv = 1.0f / fb_sqrt((float)var[{c}] + {eps});")
        expr = f"((float){el} - (float)mean[{c}]) * inv"
        if has_g:
            expr = f"{expr} * (float)gamma[{c}]"
        if has_b:
            expr = f"{expr} + (float)beta[{c}]"
        w.line(f"{index('y', idx)} = (data_t)({expr});")
        w.close(len(shape))
        return _function(name, params, w)

    lead = _nest(w, shape[:-1])
    D = shape[-1]
    xd = index("x", lead + ["d"])
    yd = index("y", lead + ["d"])
    if spec.norm == "layernorm":
        w.line("float mean = 0.0f;")
        w.loop("d", D)
        w.line(f"mean += (float){xd};")
        w.close()
        w.line(f"mean /= {D};")
        w.line("float var = 0.0f;")
        w.loop("d", D)
        w.line(f"float t = (float){xd} - mean;")
        w.line("var += t * t;")
        w.close()
        w.line(f"var /= {D};")
        w.line(f"float inv = 1.0f / fb_sqrt(var + {eps});")
        w.loop("d", D)
        expr = f"((float){xd} - mean) * inv"
    else:
        w.line("float ms = 0.0f;")
        w.loop("d", D)
        w.line(f"ms += (float){xd} * (float){xd};")
        w.close()
        w.line(f"ms /= {D};")
        w.line(f"float inv = 1.0f / fb_sqrt(ms + {eps});")
        w.loop("d", D)
        expr = f"(float){xd} * inv"
    if has_g:
        expr = f"{expr} * (float)gamma[d]"
    if has_b:
        expr = f"{expr} + (float)beta[d]"
    w.line(f"{yd} = (data_t)({expr});")
    w.close()
    w.close(len(shape) - 1)
    return _function(name, params, w)


# -- activations ------------------------------------------------------------

_ACT_EXPR = {
    "relu": "v > 0.0f ? v : 0.0f",
    "relu6": "v < 0.0f ? 0.0f : (v > 6.0f ? 6.0f : v)",
    "sigmoid": "1.0f / (1.0f + fb_exp(-v))",
    "tanh": "fb_tanh(v)",
    "elu": "v > 0.0f ? v : fb_exp(v) - 1.0f",
    "silu": "v / (1.0f + fb_exp(-v))",
    "gelu": "0.5f * v * (1.0f + fb_tanh(0.7978845608f * (v + 0.044715f * v * v * v)))",
    "hard_sigmoid": "v / 6.0f + 0.5f < 0.0f ? 0.0f : (v / 6.0f + 0.5f > 1.0f ? 1.0f : v / 6.0f + 0.5f)",
    "hard_swish": "v * (v / 6.0f + 0.5f < 0.0f ? 0.0f : (v / 6.0f + 0.5f > 1.0f ? 1.0f : v / 6.0f + 0.5f))",
    "exp": "fb_exp(v)",
}


def _act(spec: ActSpec, name: str) -> KernelCode:
    params, _, _ = _operand_params(spec)
    w = _Writer()
    if spec.act != "softmax":
        idx = _nest(w, spec.shape)
        w.line(f"float v = (float){index('x', idx)};")
        w.line(f"{index('y', idx)} = (data_t)({_ACT_EXPR[spec.act]});")
        w.close(len(spec.shape))
        return _function(name, params, w)
    lead = _nest(w, spec.shape[:-1])
    D = spec.shape[-1]
    xd, yd = index("x", lead + ["d"]), index("y", lead + ["d"])
    x0 = index("x", lead + ["0"])
    w.line(f"float mx = (float){x0};")
    w.loop("d", D, start="1")
    w.line(f"if ((float){xd} > mx) mx = (float){xd};")
    w.close()
    w.line(f"float e[{D}];")
    w.line("float sum = 0.0f;")
    w.loop("d", D)
    w.line(f"e[d] = fb_exp((float){xd} - mx);")
    w.line("sum += e[d];")
    w.close()
    w.loop("d", D)
    w.line(f"{yd} = (data_t)(e[d] / sum);")
    w.close()
    w.close(len(spec.shape) - 1)
    return _function(name, params, w)


# -- attention / rope -------------------------------------------------------

def _rope_rows(w: _Writer, arr: str, rows: int, heads: int, hd: int, base: float, out: str | None = None) -> None:
    out = out or arr
    w.loop("p", rows)
    w.loop("h", heads)
    w.loop("t", hd // 2)
    w.line(f"float ang = (float)p * fb_pow({c_float(base)}, -2.0f * (float)t / {float(hd)}f);")
    w.line("float c = fb_cos(ang), s = fb_sin(ang);")
    w.line(f"float a = (float){arr}[p][h * {hd} + 2 * t];")
    w.line(f"float b = (float){arr}[p][h * {hd} + 2 * t + 1];")
    w.line(f"{out}[p][h * {hd} + 2 * t] = a * c - b * s;")
    w.line(f"{out}[p][h * {hd} + 2 * t + 1] = a * s + b * c;")
    w.close(3)


def _rope(spec: RopeSpec, name: str) -> KernelCode:
    params, _, _ = _operand_params(spec)
    w = _Writer()
    _rope_rows(w, "x", spec.seq_len, spec.dim // spec.head_dim, spec.head_dim, spec.base, out="y")
    return _function(name, params, w)


def _proj(w: _Writer, dst: str, src: str, weight: str, rows: int, inner: int, cols: int) -> None:
    w.loop("i", rows)
    w.loop("c", cols)
    w.line("float acc = 0.0f;")
    w.loop("e", inner)
    w.line(f"acc += (float){src}[i][e] * (float){weight}[e][c];")
    w.close()
    w.line(f"{dst}[i][c] = acc;")
    w.close(2)


def _attention(spec: AttnSpec, name: str) -> KernelCode:
    params, _, _ = _operand_params(spec)
    L, D, KV, hd = spec.seq_len, spec.hidden, spec.kv_dim, spec.head_dim
    per_kv = spec.heads // spec.kv_groups
    w = _Writer()
    w.line(f"static float Qp[{L}][{D}];")
    w.line(f"static float Kp[{L}][{KV}];")
    w.line(f"static float Vp[{L}][{KV}];")
    w.line(f"static float ctx[{L}][{D}];")
    w.line(f"float sc[{L}];")
    _proj(w, "Qp", "q", "wq", L, D, D)
    _proj(w, "Kp", "k", "wk", L, D, KV)
    _proj(w, "Vp", "v", "wv", L, D, KV)
    if spec.with_rope:
        _rope_rows(w, "Qp", L, spec.heads, hd, spec.rope_base)
        _rope_rows(w, "Kp", L, spec.kv_groups, hd, spec.rope_base)
    w.line(f"const float scale = 1.0f / fb_sqrt({float(hd)}f);")
    w.loop("h", spec.heads)
    w.line(f"int g = h / {per_kv};")
    w.loop("i", L)
    lo = f"(i - {spec.window - 1} > 0 ? i - {spec.window - 1} : 0)" if spec.window else "0"
    w.line(f"int lo = {lo};")
    w.line("float mx = 0.0f;")
    w.open("for (int j = lo; j <= i; j++)")
    w.line("float s = 0.0f;")
    w.loop("t", hd)
    w.line(f"s += Qp[i][h * {hd} + t] * Kp[j][g * {hd} + t];")
    w.close()
    w.line("sc[j] = s * scale;")
    w.line("if (j == lo || sc[j] > mx) mx = sc[j];")
    w.close()
    w.line("float sum = 0.0f;")
    w.open("for (int j = lo; j <= i; j++)")
    w.line("sc[j] = fb_exp(sc[j] - mx);")
    w.line("sum += sc[j];")
    w.close()
    w.loop("t", hd)
    w.line("float acc = 0.0f;")
    w.open("for (int j = lo; j <= i; j++)")
    w.line(f"acc += sc[j] * Vp[j][g * {hd} + t];")
    w.close()
    w.line(f"ctx[i][h * {hd} + t] = acc / sum;")
    w.close(3)
    w.loop("i", L)
    w.loop("c", D)
    w.line("float acc = 0.0f;")
    w.loop("e", D)
    w.line("acc += ctx[i][e] * (float)wo[e][c];")
    w.close()
    w.line("out[i][c] = (data_t)acc;")
    w.close(2)
    return _function(name, params, w)


# -- helpers ----------------------------------------------------------------

def _dropout(spec: DropoutSpec, name: str) -> KernelCode:
    params, _, _ = _operand_params(spec)
    w = _Writer()
    w.line("uint64_t n = 0;")
    idx = _nest(w, spec.shape)
    keep_scale = c_double(1.0 / (1.0 - spec.p))
    w.line(f"double u = fb_uniform({spec.seed}ULL, n++);")
    w.line(f"{index('y', idx)} = u >= {c_double(spec.p)} ? "
           f"(data_t)((double){index('x', idx)} * {keep_scale}) : (data_t)0;")
    w.close(len(spec.shape))
    return _function(name, params, w)


def _pool(spec: PoolSpec, name: str) -> KernelCode:
    params, _, _ = _operand_params(spec)
    c, oh, ow = spec.out_shape
    K, s = spec.kernel, spec.stride
    w = _Writer()
    w.loop("c", c)
    w.loop("oh", oh)
    w.loop("ow", ow)
    if spec.pool == "max":
        w.line(f"float acc = (float)x[c][oh * {s}][ow * {s}];")
    else:
        w.line("float acc = 0.0f;")
    w.loop("kh", K)
    w.loop("kw", K)
    w.line(f"float v = (float)x[c][oh * {s} + kh][ow * {s} + kw];")
    w.line("if (v > acc) acc = v;" if spec.pool == "max" else "acc += v;")
    w.close(2)
    result = "acc" if spec.pool == "max" else f"acc / {float(K * K)}f"
    w.line(f"y[c][oh][ow] = (data_t)({result});")
    w.close(3)
    return _function(name, params, w)


def _eltwise(spec: EltwiseSpec, name: str) -> KernelCode:
    params, _, _ = _operand_params(spec)
    w = _Writer()
    idx = _nest(w, spec.shape)
    op = "+" if spec.op == "add" else "*"
    w.line(f"{index('y', idx)} = {index('a', idx)} {op} {index('b', idx)};")
    w.close(len(spec.shape))
    return _function(name, params, w)


def _move(spec: MoveSpec, name: str) -> KernelCode:
    params, _, _ = _operand_params(spec)
    params += [f"int o{d}" for d in range(len(spec.full))]
    w = _Writer()
    idx = _nest(w, spec.shape)
    big = [f"{v} + o{d}" for d, v in enumerate(idx)]
    if spec.direction == "load":
        w.line(f"{index('dst', idx)} = {index('src', big)};")
    else:
        w.line(f"{index('dst', big)} = {index('src', idx)};")
    w.close(len(spec.shape))
    return _function(name, params, w)


_EMITTERS = {
    "linear": _linear, "conv": _conv, "norm": _norm, "act": _act, "attention": _attention,
    "rope": _rope, "dropout": _dropout, "pool": _pool, "eltwise": _eltwise, "move": _move,
}


def kernel_name(spec: OperatorSpec, prefix: str) -> str:
    return f"{prefix}_{spec.kind}_{spec.content_hash()[:8]}"


def kernel_function(spec: OperatorSpec, prefix: str = "fb") -> KernelCode:
    return _EMITTERS[spec.kind](spec, kernel_name(spec, prefix))


def call_arguments(spec: OperatorSpec, inputs, outputs) -> list[str]:
    args = list(inputs) + list(outputs)
    if isinstance(spec, MoveSpec):
        args += [str(o) for o in spec.origin]
    return args
