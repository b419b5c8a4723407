"""Relaxation time of ideal HMC on diag(1, kappa) against kappa, with a log-log fit."""
import argparse

from hmc_convergence.analysis import relaxation_scaling_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kappas", default="16,64,256")
    ap.add_argument("--c", type=float, default=2.0)
    ap.add_argument("--samples", type=int, default=2_000_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    kappas = [float(k) for k in args.kappas.split(",")]
    rep = relaxation_scaling_experiment(kappas, args.c, args.samples, args.seed)
    print("kappa,tau_measured,tau_exact")
    for k, tau, exact in zip(rep.kappas, rep.measurements, rep.predicted):
        print(f"{k:g},{tau:.4f},{exact:.4f}")
    print(f"# slope {rep.fitted_exponent:.4f}, rms residual {rep.fit_residual:.3g}")


if __name__ == "__main__":
    main()
