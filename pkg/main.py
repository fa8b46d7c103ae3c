import time
start_time = time.time() # Start timer before all imports

import logging
import os
import sys
from typing import Any, Dict

import torch
from dotenv import load_dotenv

from create_parser import create_parser
from src.entropy_pipeline import EntropyPipeline, run_all
from src.impl import AcceptanceEvaluator, CombinedExtrapolator, ExactOracle
from src.interface import HanError
from src.util.run_config import RunConfig, load_config


def cli_overrides(args) -> Dict[str, Any]:
    """Map parsed CLI flags onto the RunConfig layout; unset flags are left out."""
    overrides: Dict[str, Any] = {}
    if getattr(args, "seed", None) is not None:
        overrides.setdefault("run", {})["seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        overrides.setdefault("run", {})["jobs"] = args.jobs
    if getattr(args, "ns", None) is not None:
        overrides.setdefault("estimator", {})["n_samples"] = args.ns
    if getattr(args, "bootstrap", None) is not None:
        overrides.setdefault("estimator", {})["bootstrap"] = args.bootstrap
    return overrides


def create_pipeline(config: RunConfig, force: bool = False) -> EntropyPipeline:
    """Create and return a new EntropyPipeline with all components."""
    extrapolator = CombinedExtrapolator()
    oracle = ExactOracle()
    evaluator = AcceptanceEvaluator(seed=config.run.seed, jobs=config.run.jobs)

    return EntropyPipeline(
        config=config,
        extrapolator=extrapolator,
        oracle=oracle,
        evaluator=evaluator,
        force=force,
    )


def main() -> int:
    parser = create_parser()  # Create the CLI parser
    args = parser.parse_args()

    load_dotenv()
    logging.basicConfig(
        level=os.environ.get("HAN_LOG_LEVEL", "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        config = load_config(args.config, cli_overrides(args))
        logging.getLogger().setLevel(config.run.log_level.upper())
        if config.run.torch_threads:
            torch.set_num_threads(config.run.torch_threads)
        pipeline = create_pipeline(config, force=getattr(args, "force", False))

        # Execute commands
        if args.command == "train":
            pipeline.cmd_train()
        elif args.command == "estimate":
            pipeline.cmd_estimate()
        elif args.command == "entropy":
            pipeline.cmd_entropy()
        elif args.command == "extrapolate":
            pipeline.cmd_extrapolate()
        elif args.command == "oracle":
            pipeline.cmd_oracle()
        elif args.command == "verify":
            pipeline.cmd_verify(full=args.full)
        elif args.command == "report":
            pipeline.cmd_report()
        elif args.command == "run":
            run_all(pipeline)
    except HanError as exc:
        print(f"❌ {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    code = main()
    end_time = time.time()
    print(f"\n⏱️  Total time taken: {end_time - start_time:.2f} seconds")
    sys.exit(code)
