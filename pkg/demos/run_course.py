"""Run the built-in ten-object course and print the outcome table.

Usage: python3 demos/run_course.py [--adaptive-order]

The default arm aborts a pick whose approach swing would clip the edge
of the reach envelope; --adaptive-order descends before swinging wide,
which rescues the boundary pipe.
"""

import sys

from clearbot.orchestrator import build_benchmark_config, run_scenario


def main() -> None:
    adaptive = "--adaptive-order" in sys.argv[1:]
    report, _ = run_scenario(build_benchmark_config(adaptive_order=adaptive))
    print(f"course: {report.name}, seed {report.seed}, "
          f"adaptive order {'on' if adaptive else 'off'}")
    for r in report.records:
        line = f"  {r.object_id:<3} {r.cls:<6} {r.outcome:<17} {r.elapsed_s:5.1f} s"
        if r.attribution:
            line += "  [" + ", ".join(r.attribution) + "]"
        print(line)
    print(f"picked {report.succeeded}/{report.attempted}")


if __name__ == "__main__":
    main()
