"""
One run function per command. Each writes its outputs next to ``args.out``
and returns the report with the exit code of the run: 0 when the verdict
holds, 1 on a domain failure.
"""
import math
import warnings

import numpy as np
import torch

from src.assembly import assemble, commuting_diagram_report, hodge_eigenvalues, hodge_zero_modes
from src.complex import dual_complex
from src.exceptions import FeecError, VerificationFailure
from src.fesystem import TrimmedSystem
from src.harmonic import (
    canonical_harmonic_basis,
    l2_products,
    locally_harmonic_subsystem,
    upwinded_products,
)
from src.mirrors import (
    MirrorInterpolator,
    canonical_trimmed_mirrors,
    dof_table,
    faithfulness_check,
    harmonic_mirrors,
    l2_mirrors,
)
from src.samplers import RationalSampler
from src.smoothing import (
    SampledForm,
    ScaleField,
    commutation_residual,
    locality_check,
    macroelement_check,
    make_kernel,
    mesh_scale_field,
    regularize,
    scale_field_constant,
    scaling_covariance_residual,
)
from src.tensorfes import TensorSystem, tensor_dimension_checks
from .meshes import mesh_to_dict
from .reports import write_csv, write_json, write_triplets

moment_tolerance = 1e-10
reproduction_tolerance = 1e-8
commutation_tolerance = 1e-5


def _constant_order(args):
    spec = args.order_spec
    if spec["family"] != "trimmed" or spec["per_cell"]:
        return None
    return spec["default"]


def run_check(args):
    report = args.system.compatibility()
    out = report.to_dict()
    out["mesh"] = args.complex.name
    write_json(out, args.out + ".json")
    if args.verbose:
        print("Failing cells: {}".format(report.failing_cells()))
    return out, 0 if report.compatible else 1


def run_betti(args):
    cx = args.complex
    out = {
        "mesh": cx.name,
        "counts": list(cx.counts()),
        "betti": list(cx.betti_numbers()),
        "euler_characteristic": cx.euler_characteristic(),
    }
    code = 0
    report = args.system.compatibility()
    if report.compatible:
        check = args.system.discrete_cohomology_check(report)
        out["discrete"] = check
        code = 0 if check["verdict"] else 1
    else:
        out["discrete"] = None
        out["failing_cells"] = report.failing_cells()
        code = 1
    if args.verbose:
        print("Betti numbers: {}".format(out["betti"]))
    write_json(out, args.out + ".json")
    return out, code


def _basis_entries(system, space):
    entries = []
    for j, fam in enumerate(space.families):
        cells = {}
        for cid, coeffs in fam.items():
            forms = system.element_forms(cid, space.k, coeffs)
            cells[cid] = {
                "coefficients": coeffs,
                "forms": {p: u.to_dict() for p, u in forms.items()},
            }
        entry = {"index": j, "cells": cells}
        if getattr(space, "labels", None) is not None:
            entry["cell"] = space.labels[j]
        elif space.homes[j] is not None:
            entry["home"] = space.homes[j]
        entries.append(entry)
    return entries


def run_basis(args):
    system = args.system
    cx = args.complex
    degrees = [args.k] if args.k is not None else list(range(cx.dim + 1))
    out = {"mesh": cx.name, "kind": system.kind, "bases": {}}
    for k in degrees:
        space = system.global_space(None, k)
        out["bases"][str(k)] = {"dim": space.dim, "families": _basis_entries(system, space)}
    p = _constant_order(args)
    if p is not None and cx.is_simplicial:
        mirrors = canonical_trimmed_mirrors(p, cx)
        table = [row for row in dof_table(mirrors, system) if row["k"] in degrees]
        write_json(table, args.out + "_dofs.json")
        out["dofs"] = len(table)
    write_json(out, args.out + ".json")
    return out, 0


def run_dual(args):
    cx = args.complex
    try:
        dual = dual_complex(cx)
        parent = TrimmedSystem(dual, 1, args.threads, args.verbose)
        products = l2_products(parent)
        sub = locally_harmonic_subsystem(parent, products, True, args.threads, args.verbose)
        bases = {}
        for k in range(dual.dim + 1):
            space = canonical_harmonic_basis(sub, k)
            bases[str(k)] = {
                "dim": space.dim,
                "rho_identity": True,
                "families": _basis_entries(sub, space),
            }
    except FeecError as err:
        out = {"mesh": cx.name, "error": type(err).__name__, "message": str(err)}
        write_json(out, args.out + ".json")
        return out, 1
    write_json(mesh_to_dict(dual), args.out + "_dual_mesh.json")
    write_json(bases, args.out + "_harmonic_basis.json")
    out = {
        "mesh": cx.name,
        "dual_counts": list(dual.counts()),
        "dual_betti": list(dual.betti_numbers()),
        "rho_identity": {k: v["rho_identity"] for k, v in bases.items()},
    }
    if args.verbose:
        print("Dual cells per dimension: {}".format(out["dual_counts"]))
        print("De Rham map on the canonical harmonic basis: identity")
    write_json(out, args.out + ".json")
    return out, 0


def run_eig(args):
    system = args.system
    k = args.k if args.k is not None else 0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pair = assemble(system, k)
        values = hodge_eigenvalues(system, k, args.count, pair)
    for w in caught:
        warnings.warn(str(w.message))
    zero = hodge_zero_modes(system, k)
    table = {
        "index": list(range(1, values.size + 1)),
        "eigenvalue": values,
        "zero_modes": [zero["zero_modes"]] * values.size,
        "betti": [zero["betti"]] * values.size,
    }
    write_csv(table, args.out + ".csv")
    write_triplets(pair.mass, args.out + "_mass.txt", {"k": k, "matrix": "mass"})
    write_triplets(pair.stiffness, args.out + "_stiffness.txt", {"k": k, "matrix": "stiffness"})
    out = {
        "mesh": args.complex.name,
        "k": k,
        "eigenvalues": values,
        "clamped": values.size < args.count,
        "zero_modes": zero,
    }
    write_json(out, args.out + ".json")
    if args.verbose:
        print("Eigenvalues: {}".format(values))
    return out, 0 if zero["equal"] else 1


def _mirrors(args):
    system = args.system
    if args.mirrors == "canonical":
        p = _constant_order(args)
        if p is None:
            raise VerificationFailure("Canonical mirrors need a constant trimmed order.")
        return canonical_trimmed_mirrors(p, args.complex, args.host_increment)
    if args.mirrors == "l2":
        return l2_mirrors(system)
    if args.mirrors == "harmonic":
        return harmonic_mirrors(system, l2_products(system))
    return harmonic_mirrors(system, upwinded_products(system, args.alpha))


def run_interp_test(args):
    system = args.system
    out = {"mesh": args.complex.name, "mirrors": args.mirrors}
    try:
        mirrors = _mirrors(args)
        faithful = faithfulness_check(mirrors, system, seed=args.seed)
        out["faithful"] = faithful.faithful
        interpolator = MirrorInterpolator(mirrors, system)
        report = commuting_diagram_report(
            system, interpolator, args.samples, args.degree, args.seed
        )
    except FeecError as err:
        out.update({"verdict": False, "error": type(err).__name__, "message": str(err)})
        write_json(out, args.out + ".json")
        if args.verbose:
            print("First failure: {}".format(err))
        return out, 1
    out.update(report)
    write_json(out, args.out + ".json")
    if args.verbose and report["failures"]:
        print("First failure: {}".format(report["failures"][0]))
    return out, 0 if report["verdict"] else 1


def run_tensor_check(args):
    first, second = args.complex.factor_complexes
    order = args.order_spec["default"]
    A = TrimmedSystem(first, order, args.threads, args.verbose)
    B = TrimmedSystem(second, order, args.threads, args.verbose)
    C = TensorSystem(A, B, args.complex, args.threads, args.verbose)
    try:
        out = tensor_dimension_checks(A, B, C)
    except FeecError as err:
        out = {"verdict": None, "error": type(err).__name__, "message": str(err)}
        write_json(out, args.out + ".json")
        return out, 1
    out["mesh"] = args.complex.name
    write_json(out, args.out + ".json")
    return out, 0 if all(out["verdict"].values()) else 1


def sinusoidal_form(box=((-1.0, -1.0), (2.0, 2.0))):
    """
    The 1-form u = sin(2 pi y) dx + cos(2 pi x) dy on a box of the plane,
    with du = (-2 pi sin(2 pi x) - 2 pi cos(2 pi y)) dx dy.
    """
    two_pi = 2.0 * math.pi

    def coefficients(x):
        return torch.stack([torch.sin(two_pi * x[:, 1]), torch.cos(two_pi * x[:, 0])], dim=1)

    def derivative(x):
        value = -two_pi * torch.sin(two_pi * x[:, 0]) - two_pi * torch.cos(two_pi * x[:, 1])
        return value[:, None]

    du = SampledForm(2, 2, derivative, box)
    return SampledForm(2, 1, coefficients, box, du)


def wavy_scale(amplitude=0.25):
    """A smooth non constant scale field on the plane."""
    return ScaleField(
        lambda x: 1.0 + amplitude * torch.sin(x[:, 0]) * torch.cos(x[:, 1])
    )


def run_smooth_test(args):
    torch.manual_seed(args.seed)
    eps = args.epsilon
    moments = {}
    for d in (1, 2):
        for p in range(4):
            moments["p={},d={}".format(p, d)] = make_kernel(p, d).moment_errors()
    sampler = RationalSampler(args.seed)
    box = (np.zeros(2), np.ones(2))
    points = 0.3 + 0.4 * torch.rand(50, 2, dtype=torch.float64)
    reproduction = {}
    for p in range(4):
        kernel = make_kernel(p, 2)
        for k in range(3):
            u = sampler.form(2, k, p)
            f = SampledForm.from_polyform(u, box)
            value = regularize(f, wavy_scale(), eps, kernel, points)
            reproduction["p={},k={}".format(p, k)] = float(
                (value - u.evaluate_batch(points)).abs().max()
            )
    kernel = make_kernel(args.degree, 2)
    fixture = sinusoidal_form()
    centre = torch.tensor([[0.5, 0.5]], dtype=torch.float64)
    residuals = {
        "commutation": commutation_residual(
            fixture, scale_field_constant(1.0), eps, kernel, points[:10]
        ),
        "locality": locality_check(fixture, wavy_scale(), eps, kernel, centre[0]),
        "scaling_covariance": scaling_covariance_residual(
            fixture, wavy_scale(), eps, kernel, centre, 2.0, [0.1, -0.2]
        ),
    }
    out = {
        "epsilon": eps,
        "kernel_moments": moments,
        "reproduction": reproduction,
        "residuals": residuals,
    }
    verdict = (
        max(moments.values()) <= moment_tolerance
        and max(reproduction.values()) <= reproduction_tolerance
        and residuals["commutation"] <= commutation_tolerance
        and residuals["locality"] == 0.0
    )
    if args.complex is not None:
        field = mesh_scale_field(args.complex)
        out["scale_bounds"] = field.bounds
        out["macroelements"] = macroelement_check(args.complex, field, eps)
    out["verdict"] = verdict
    write_json(out, args.out + ".json")
    write_csv(kernel.table(), args.out + "_kernel.csv")
    if args.verbose:
        print("Smoothing verdict: {}".format(verdict))
    return out, 0 if verdict else 1


runners = {
    "check": run_check,
    "betti": run_betti,
    "basis": run_basis,
    "dual": run_dual,
    "eig": run_eig,
    "interp-test": run_interp_test,
    "tensor-check": run_tensor_check,
    "smooth-test": run_smooth_test,
}
