"""Mean gradient evaluations per collocation HMC step over a grid of kappa and eps."""
import argparse

from hmc_convergence.analysis import gradient_cost


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kappas", default="16,64,256")
    ap.add_argument("--eps", default="0.1,0.05")
    ap.add_argument("--dim", type=int, default=1000)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--kind", default="quadratic")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print("kappa,eps,grads_per_step,mean_grad_norm_sq")
    for kappa in (float(k) for k in args.kappas.split(",")):
        for eps in (float(e) for e in args.eps.split(",")):
            row = gradient_cost(kappa, eps, args.dim, args.steps, args.seed, args.kind)
            print(f"{kappa:g},{eps:g},{row.mean_grads_per_step:.3f},{row.mean_grad_norm_sq:.4g}")


if __name__ == "__main__":
    main()
