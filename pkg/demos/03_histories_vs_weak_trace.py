"""Where was the photon that clicked D1?

Two answers.  In the consistent family {A, B+C} it was in A with
probability 1.  The finer family {A, B, C} has no probabilities at all
because its histories interfere.  Weak values, in contrast, are non-zero on
A, B and C alike.  The comparison table puts both side by side.
"""

from __future__ import annotations

from nested_mzi import (
    Experiment,
    Query,
    check_consistency,
    compare_ch_weaktrace,
    conditional_distribution,
    decoherence_matrix,
    default_nested_mzi,
    inference_guard,
    parse_framework,
    refine_frameworks,
)
from nested_mzi.errors import IncompatibleFrameworks

spec = default_nested_mzi()
exp = Experiment(spec)

for text in ("probe:{A,B+C}", "probe:{A,B,C}", "probe:{C,A+B}"):
    f = parse_framework(text, spec)
    rep = check_consistency(decoherence_matrix(f, exp))
    line = f"{f.describe():28s} consistent={rep.consistent}  max off-diagonal={rep.max_offdiag:.4g}"
    if rep.consistent:
        cond = conditional_distribution(f, "D1", exp)
        line += "  Pr(.|D1) = " + ", ".join(f"{e.label}: {p:.3g}" for e, p in cond.items())
    else:
        line += f"  witness {rep.witness}"
    print(line)

dm = decoherence_matrix(parse_framework("probe:{A,B,C}", spec), exp)
print("D((B,D1),(C,D1)) =", dm.entry(("B", "D1"), ("C", "D1")))
print("D((A,D1),(B,D1)) =", dm.entry(("A", "D1"), ("B", "D1")))

f1, f2 = parse_framework("probe:{A,B+C}", spec), parse_framework("probe:{C,A+B}", spec)
try:
    refine_frameworks(f1, f2, exp)
except IncompatibleFrameworks as exc:
    print("cannot combine:", exc)

for entry in inference_guard(
    {"f1": f1, "f2": f2},
    [Query("f1", "A", "D1"), (Query("f1", "A", "D1"), Query("f2", "C", "D1"))],
    exp,
):
    print(entry.to_dict())

print()
print(compare_ch_weaktrace(spec, "D1", f1).to_text())
print(compare_ch_weaktrace(spec, "D3", f1).to_text())
