"""Command-line front end.

    qptkit simulate     --gate cnot --pairs 2000 --count-noise poisson --seed 7 --out counts.json
    qptkit reconstruct  --counts counts.json --method mle --out chi.json
    qptkit metrics      --chi chi.json --ideal cnot --scatter sweep.csv
    qptkit predict      --chi chi.json --input DH --ideal cnot
    qptkit residuals    --chi chi.json --counts counts.json --histogram hist.csv

Exit codes: 0 success, 2 bad input, 3 reconstruction did not converge,
4 refused to use an unphysical process matrix.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .formats import (
    UNCONVERGED,
    FormatError,
    dump_chi,
    dump_counts,
    parse_chi,
    parse_counts,
    write_scatter,
)
from .metrics import (
    DEFAULT_SWEEP_SAMPLES,
    compute_metrics,
    predict_output,
)
from .process import CNOT, IDENTITY, chi_from_unitary, cp_defect, tp_defect
from .qcore import POLARIZATION, PureState, ket, purity, state_fidelity, tangle
from .recon import ConvergenceError, FitConfig, linear_inversion, mle_reconstruct, residuals
from .tomography import NoiseSpec, simulate_counts, standard_settings

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONVERGENCE = 3
EXIT_UNPHYSICAL = 4

GATES = {"cnot": CNOT, "identity": IDENTITY}


class CliError(Exception):
    def __init__(self, message, code=EXIT_INPUT):
        super().__init__(message)
        self.code = code


# ------------------------------------------------------------------ helpers


def _read(path: str) -> str:
    try:
        if path == "-":
            return sys.stdin.read()
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: str, text: str) -> None:
    try:
        if path == "-":
            sys.stdout.write(text)
            return
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}") from None


def _load_chi(path: str, allow_unphysical: bool):
    try:
        chi = parse_chi(_read(path))
    except FormatError as exc:
        raise CliError(f"{path}: {exc}") from None
    if not chi.physical and not allow_unphysical:
        raise CliError(
            f"{path}: process matrix is flagged {list(chi.flags)}; pass --allow-unphysical to use it anyway",
            EXIT_UNPHYSICAL,
        )
    return chi


def _load_counts(path: str):
    try:
        return parse_counts(_read(path))
    except (FormatError, ValueError) as exc:
        raise CliError(f"{path}: {exc}") from None


def _pauli_basis_only(chi, path):
    if chi.basis.name != "pauli-2q":
        raise CliError(f"{path}: expected a chi in the pauli-2q basis, found {chi.basis.name}")


def _emit(doc: dict) -> None:
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")


def _matrix_doc(m: np.ndarray) -> dict:
    return {"real": m.real.tolist(), "imag": m.imag.tolist()}


def _parse_amplitudes(text: str) -> np.ndarray:
    try:
        amps = np.array([complex(tok.strip().replace(" ", "")) for tok in text.split(",")])
    except ValueError:
        raise CliError(f"--amplitudes: cannot parse {text!r}; expected comma-separated complex numbers") from None
    return amps


# ----------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    if args.gate.startswith("chi-file:"):
        chi = _load_chi(args.gate[len("chi-file:"):], args.allow_unphysical)
        _pauli_basis_only(chi, args.gate)
    elif args.gate in GATES:
        chi = chi_from_unitary(GATES[args.gate])
    else:
        raise CliError(f"--gate: expected cnot, identity or chi-file:PATH, got {args.gate!r}")
    if args.noise == "none":
        noise = NoiseSpec(count_noise=args.count_noise)
    else:
        try:
            noise = NoiseSpec(args.depolarizing, args.dephasing, args.count_noise)
        except ValueError as exc:
            raise CliError(str(exc)) from None
    if not args.pairs > 0:
        raise CliError("--pairs must be positive")
    data = simulate_counts(chi, args.pairs, noise, args.seed, allow_unphysical=args.allow_unphysical)
    _write(args.out, dump_counts(data))
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    data = _load_counts(args.counts)
    if args.method == "linear":
        chi = linear_inversion(data)
        _write(args.out, dump_chi(chi))
        _emit({
            "method": "linear",
            "flags": list(chi.flags),
            "tp_defect": tp_defect(chi),
            "cp_defect": cp_defect(chi),
        })
        return EXIT_OK
    try:
        config = FitConfig(lam=args.lam, restarts=args.restarts, seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    code = EXIT_OK
    try:
        result = mle_reconstruct(data, config)
        chi = result.chi
    except ConvergenceError as exc:
        result = exc.result
        chi = result.chi.with_flags(UNCONVERGED)
        code = EXIT_CONVERGENCE
        print(f"qptkit: {exc}", file=sys.stderr)
    _write(args.out, dump_chi(chi))
    _emit({
        "method": "mle",
        "flags": list(chi.flags),
        "objective_value": result.objective_value,
        "tp_defect": result.tp_defect_final,
        "cp_defect": result.cp_defect_final,
        "iterations": result.iterations_used,
        "restart_index_of_best": result.restart_index_of_best,
        "lambda": result.lam,
    })
    return code


def cmd_metrics(args) -> int:
    chi = _load_chi(args.chi, args.allow_unphysical)
    _pauli_basis_only(chi, args.chi)
    if args.sweep_samples < 1:
        raise CliError("--sweep-samples must be at least 1")
    report, table = compute_metrics(
        chi,
        GATES[args.ideal],
        sweep_samples=args.sweep_samples,
        seed=args.seed,
        threads=args.threads,
        allow_unphysical=args.allow_unphysical,
    )
    if args.scatter:
        try:
            with open(args.scatter, "w", encoding="utf-8", newline="\n") as fh:
                write_scatter(table, fh)
        except OSError as exc:
            raise CliError(f"cannot write {args.scatter}: {exc.strerror}") from None
    doc = report.to_dict()
    doc["ideal"] = args.ideal
    _emit(doc)
    return EXIT_OK


def cmd_predict(args) -> int:
    chi = _load_chi(args.chi, args.allow_unphysical)
    _pauli_basis_only(chi, args.chi)
    if args.input is not None:
        label = args.input.upper()
        if len(label) != 2 or any(ch not in POLARIZATION for ch in label):
            raise CliError(f"--input: expected two letters from HVDARL, got {args.input!r}")
        amps = ket(label)
    else:
        amps = _parse_amplitudes(args.amplitudes)
        if amps.size != 4:
            raise CliError(f"--amplitudes: expected 4 amplitudes, got {amps.size}")
    try:
        state = PureState(amps)
    except ValueError as exc:
        raise CliError(f"input state: {exc}") from None
    out = predict_output(chi, state, allow_unphysical=args.allow_unphysical)
    rho = out.entries if hasattr(out, "entries") else out
    doc = _matrix_doc(rho)
    doc["purity"] = purity(rho)
    doc["tangle"] = tangle(rho) if chi.physical else None
    if args.ideal:
        u = GATES[args.ideal].matrix
        target = u @ state.amplitudes
        doc["fidelity"] = state_fidelity(np.outer(target, target.conj()), rho)
    _emit(doc)
    return EXIT_OK


def cmd_residuals(args) -> int:
    chi = _load_chi(args.chi, False)
    _pauli_basis_only(chi, args.chi)
    data = _load_counts(args.counts)
    rep = residuals(chi, data)
    doc = {"sigma": rep.sigma, "amplitude": rep.amplitude, "degenerate": rep.degenerate}
    if args.full:
        doc["deltas"] = [
            {"input": a, "analyzer": b, "delta": float(d)}
            for (a, b), d in zip((st.key for st in standard_settings()), rep.deltas)
        ]
    if args.histogram:
        lines = ["bin_center,count"]
        lines += [f"{c:.9g},{int(n)}" for c, n in zip(rep.bin_centers, rep.bin_counts)]
        _write(args.histogram, "\n".join(lines) + "\n")
    _emit(doc)
    return EXIT_OK


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qptkit", description="Two-qubit process tomography toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write synthetic coincidence counts")
    p.add_argument("--gate", default="cnot", help="cnot, identity or chi-file:PATH")
    p.add_argument("--pairs", type=float, default=2000.0, help="coincident pairs per setting (C)")
    p.add_argument("--depolarizing", type=float, default=0.0)
    p.add_argument("--dephasing", type=float, default=0.0)
    p.add_argument("--count-noise", choices=("none", "poisson"), default="none")
    p.add_argument("--noise", choices=("none", "model"), default="model",
                   help="'none' ignores --depolarizing/--dephasing")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.add_argument("--allow-unphysical", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="fit a process matrix to a count file")
    p.add_argument("--counts", required=True)
    p.add_argument("--method", choices=("mle", "linear"), default="mle")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="initial penalty weight (default: from the data)")
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("metrics", help="gate metrics and the Monte-Carlo sweep")
    p.add_argument("--chi", required=True)
    p.add_argument("--ideal", choices=sorted(GATES), default="cnot")
    p.add_argument("--sweep-samples", type=int, default=DEFAULT_SWEEP_SAMPLES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--scatter", default=None, help="write the per-sample CSV here")
    p.add_argument("--allow-unphysical", action="store_true")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("predict", help="output state for one input")
    p.add_argument("--chi", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--input", help="two polarization letters, e.g. DH")
    group.add_argument("--amplitudes", help="four comma-separated complex amplitudes")
    p.add_argument("--ideal", choices=sorted(GATES), default=None)
    p.add_argument("--allow-unphysical", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("residuals", help="measured minus predicted probabilities")
    p.add_argument("--chi", required=True)
    p.add_argument("--counts", required=True)
    p.add_argument("--full", action="store_true", help="include every delta")
    p.add_argument("--histogram", default=None, help="write the 21-bin histogram CSV here")
    p.set_defaults(func=cmd_residuals)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"qptkit: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
