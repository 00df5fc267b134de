"""Run every corpus case through the four checking stages and print what each stage misses.

    python demos/failure_funnel.py
"""

from simjudge.corpus import all_cases, funnel, silent_counts

STAGE_NAMES = {"i": "unchecked", "ii": "+ gates", "iii": "+ audit", "iv": "+ probes"}


def main() -> None:
    cases = all_cases()
    results = funnel(cases)
    counts = silent_counts(results)
    print(f"{len(cases)} cases, {sum(c.is_fault for c in cases)} with an injected fault\n")
    print("stage        silent failures")
    for stage, n in counts.items():
        print(f"{stage:>4} {STAGE_NAMES[stage]:<10} {n:>4}")

    print("\ncase  target               first caught at")
    by_stage = {s: {o.case_id: o for o in outs} for s, outs in results.items()}
    for case in cases:
        if not case.is_fault:
            continue
        first = next((s for s in results if by_stage[s][case.case_id].outcome != "certified"), "-")
        caught = ", ".join(by_stage["iv"][case.case_id].caught_by) or "-"
        print(f"{case.case_id}   {case.target:<20} {first:<4} {caught}")


if __name__ == "__main__":
    main()
