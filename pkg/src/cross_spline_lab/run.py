import logging
import sys
from pathlib import Path

from cross_spline_lab.errors import ConfigurationError
from cross_spline_lab.experiment import TASKS, load_config, run_experiment
from cross_spline_lab.templates import get_templates
from cross_spline_lab.utils import FAILURE_MARKER, format_duration, format_size

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

# flag -> (config key, takes a value)
FLAGS = {
    "--config": ("config", True),
    "-c": ("config", True),
    "--seed": ("seeds", True),
    "-s": ("seeds", True),
    "--out": ("output", True),
    "-o": ("output", True),
    "--jobs": ("jobs", True),
    "-j": ("jobs", True),
    "--table": ("table", True),
    "--budget": ("budget", True),
    "--bike-path": ("bike_path", True),
    "--verbose": ("verbose", False),
    "-v": ("verbose", False),
}


def show_help() -> None:
    """Show help information"""

    help_text = """
📋 Available Commands:

  csn setup                                   # Create configs/ templates and runs/
  csn simulate  --config configs/simulate.yaml  # Write simulated datasets
  csn fit       --config configs/fit.yaml       # Fit a model per seed
  csn evaluate  --config configs/evaluate.yaml  # Score a saved model
  csn search    --config configs/search.yaml    # Random hyperparameter search
  csn diagnose  --config configs/diagnose.yaml  # Importance, PDP, ICE, H-statistic
  csn reproduce --table 4-2                     # Compare with a published table
  csn help                                    # Show this help

  🔧 Options:
  -c, --config PATH   Experiment config (YAML)
  -s, --seed N        Seed to run, repeatable (replaces 'seeds')
  -o, --out DIR       Output directory (replaces 'output')
  -j, --jobs N        Worker processes for seeds and search trials
  --table ID          reproduce: 4-2, 4-3, 4-4 or 5-2
  --budget NAME       reproduce: default or search
  --bike-path PATH    reproduce: UCI hour.csv for table 5-2
  -v, --verbose       Log progress

📁 Outputs written to the run directory:
  metrics.csv / summary.csv            # Per-seed metrics, mean and best
  report.json                          # Config echo, timing, tool version
  model_seed<N>.npz                    # Saved models
  comparison.csv                       # reproduce: ours vs published
  FAILED                               # Present only when a run failed
"""
    print(help_text)


def setup() -> None:
    """Initialize the project structure"""

    print("🚀 Project Initialization")

    for directory in ["configs", "runs"]:
        Path(directory).mkdir(exist_ok=True)
        print(f"Created Folder: {directory}/")

    for filename, content in get_templates().items():
        path = Path("configs") / filename
        if path.exists():
            print(f"⚠️  Kept existing {path}")
            continue
        path.write_text(content.format(run_name=path.stem))
        print(f"Created Config: {path}")

    print("✅ Base Structure Created!")
    print("💡 Use 'csn fit --config configs/fit.yaml' to fit your first model")


def parse_flags(argv: list[str]) -> tuple[list[str], dict]:
    """Split arguments into positionals and flag values
    Args:
        argv (list[str]): arguments after the program name
    Returns:
        tuple[list[str], dict]: positionals and parsed flags
    """
    positional, flags, problems = [], {}, []
    i = 0
    while i < len(argv):
        arg = argv[i]
        value = None
        if arg.startswith("--") and "=" in arg:
            arg, value = arg.split("=", 1)
        if arg not in FLAGS:
            if arg.startswith("-"):
                problems.append(f"unknown option '{arg}'")
            else:
                positional.append(arg)
            i += 1
            continue

        key, takes_value = FLAGS[arg]
        if not takes_value:
            flags[key] = True
            i += 1
            continue
        if value is None:
            if i + 1 >= len(argv):
                problems.append(f"option '{arg}' needs a value")
                break
            value = argv[i + 1]
            i += 1
        i += 1

        if key in ("seeds", "jobs"):
            try:
                number = int(value)
            except ValueError:
                problems.append(f"option '{arg}' needs an integer, got '{value}'")
                continue
            if key == "seeds":
                flags.setdefault("seeds", []).append(number)
            else:
                flags["jobs"] = number
        else:
            flags[key] = value

    if problems:
        raise ConfigurationError(problems)
    return positional, flags


def build_overrides(task: str, flags: dict) -> dict:
    """Config overrides from command-line flags; the subcommand sets the task"""
    overrides = {"task": task, "seeds": flags.get("seeds"), "output": flags.get("output"),
                 "jobs": flags.get("jobs")}
    reproduce = {k: flags[k] for k in ("table", "budget", "bike_path") if k in flags}
    if reproduce:
        if task != "reproduce":
            raise ConfigurationError(f"--{', --'.join(reproduce).replace('_', '-')} only apply to reproduce")
        overrides["reproduce"] = reproduce
    return overrides


def run_task(task: str, flags: dict) -> int:
    """Run one experiment task and report the outcome
    Args:
        task (str): one of the experiment tasks
        flags (dict): parsed command-line flags
    Returns:
        int: process exit code
    """
    config = flags.get("config")
    if config is None and task != "reproduce":
        print(f"❌ '{task}' needs --config PATH")
        print("💡 Use 'csn setup' to create template configs")
        return EXIT_CONFIG

    print(f"▶️  Running {task}" + (f" from {config}" if config else ""))
    try:
        cfg = load_config(config, build_overrides(task, flags))
    except ConfigurationError as e:
        print("❌ Invalid configuration:")
        for problem in e.problems:
            print(f"   - {problem}")
        return EXIT_CONFIG

    # past this point the run has started and leaves a marker on failure
    try:
        report = run_experiment(cfg)
    except Exception as e:
        print(f"❌ {task} failed: {e}")
        print(f"💡 Partial results and a {FAILURE_MARKER} marker were kept in the output directory")
        return EXIT_RUNTIME

    print(f"✅ {task} finished in {format_duration(report.wall_time)} ({len(report.seeds)} seed(s))")
    for metric, values in report.summary().items():
        if metric.startswith("test_"):
            print(f"   {metric}: mean {values['mean']:.4f}, best {values['best']:.4f}")
    if task == "reproduce":
        statuses = [row["status"] for row in report.rows]
        print(f"   {statuses.count('pass')} pass, {statuses.count('fail')} fail")
    written = sum(path.stat().st_size for path in report.artifacts if path.exists())
    print(f"📁 Results in {report.output}/ ({len(report.artifacts)} files, {format_size(written)})")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    """Main entry point for the script"""

    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        show_help()
        return EXIT_OK

    command = argv[0].lower()
    try:
        positional, flags = parse_flags(argv[1:])
    except ConfigurationError as e:
        print(f"❌ {e}")
        show_help()
        return EXIT_CONFIG

    if flags.get("verbose"):
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    if command in TASKS and not positional:
        return run_task(command, flags)
    elif command == "setup":
        setup()
    elif command == "help":
        show_help()
    else:
        print("❌ Invalid command")
        show_help()
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
