import argparse


def _positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return number


def create_parser():
    """Initialize and return the argument parser with all commands."""
    parser = argparse.ArgumentParser(description="Entanglement entropy of the quantum Ising chain via hierarchical autoregressive nets")

    # Parent parsers for shared arguments, attached to the subcommands that use them.

    config_parent = argparse.ArgumentParser(add_help=False)
    config_parent.add_argument(
        "-c",
        "--config",
        type=str,
        required=False,
        help="Path to a TOML run configuration (falls back to $HAN_CONFIG, then built-in defaults).",
    )
    config_parent.add_argument("--seed", type=int, required=False, help="Master seed for every RNG stream.")
    config_parent.add_argument("--jobs", type=_positive_int, required=False, help="Worker threads for grid points and matrix elements.")

    force_parent = argparse.ArgumentParser(add_help=False)
    force_parent.add_argument("--force", action="store_true", help="Retrain even when a checkpoint already exists.")

    sampling_parent = argparse.ArgumentParser(add_help=False)
    sampling_parent.add_argument("--ns", type=_positive_int, required=False, help="Importance samples per matrix element.")
    sampling_parent.add_argument("--bootstrap", type=int, required=False, help="Bootstrap replicas (0 disables the bootstrap).")

    subparsers = parser.add_subparsers(dest="command", help="Commands", required=True)

    subparsers.add_parser("train", help="Train one hierarchy per grid point.", parents=[config_parent, force_parent])
    subparsers.add_parser("estimate", help="Estimate ρ_A by importance sampling.", parents=[config_parent, sampling_parent])
    subparsers.add_parser("entropy", help="Spectra and entropies from stored weight streams.", parents=[config_parent, sampling_parent])
    subparsers.add_parser("extrapolate", help="Fit k → ∞ and Δτ → 0.", parents=[config_parent])
    subparsers.add_parser("oracle", help="Exact transfer-matrix and ground-state references.", parents=[config_parent])
    subparsers.add_parser("report", help="Summary table and figures.", parents=[config_parent])
    subparsers.add_parser(
        "run",
        help="Run the full pipeline: train, estimate, entropy, oracle, extrapolate, report.",
        parents=[config_parent, force_parent, sampling_parent],
    )

    verify_parser = subparsers.add_parser("verify", help="Run the acceptance checks.", parents=[config_parent])
    verify_parser.add_argument("--full", action="store_true", help="Include the slow training-based checks.")

    return parser
