import argparse

from scripts.filename import create_file_name
from src.exceptions import ConfigurationError
from src.fesystem import PolynomialSystem, TrimmedSystem
from src.utils import to_rational
from .meshes import check_orders, load_mesh, load_orders

commands = (
    "check",
    "betti",
    "basis",
    "dual",
    "eig",
    "interp-test",
    "tensor-check",
    "smooth-test",
)


def parse_alpha(text):
    """Parses ``"a,b[,c]"`` into a list of exact rationals."""
    try:
        return [to_rational(x) for x in text.split(",")]
    except (TypeError, ValueError, ZeroDivisionError):
        raise ConfigurationError("Invalid --weight-alpha {}".format(text)) from None


def order_specification(args):
    """
    Order specification of the run: an orders file wins over the orders
    stored in the mesh file, which win over ``--order``.
    """
    if args.orders is not None:
        spec = load_orders(args.orders)
    elif args.mesh_data is not None and args.mesh_data.orders is not None:
        spec = args.mesh_data.orders
    else:
        spec = check_orders({"family": args.family, "default": args.order})
    spec.setdefault("default", args.order)
    spec.setdefault("per_cell", {})
    spec.setdefault("drop", 1)
    return spec


def build_system(complex_, spec, threads=1, verbose=False):
    order = {"default": spec["default"], "per_cell": spec["per_cell"]}
    if spec["family"] == "polynomial":
        return PolynomialSystem(complex_, order, spec["drop"], threads, verbose)
    return TrimmedSystem(complex_, order, threads, verbose)


def manage_experiment_configuration(args=None):
    """
    Validates the parsed flags and completes them with the objects the run
    needs: the mesh (``args.complex``), the order specification and the
    element system, the weight vector and the output path.

    Raises ConfigurationError on invalid combinations and MeshFormatError
    on unreadable meshes.
    """

    if args is None:
        # Get parser arguments
        parser = get_parser()
        args = parser.parse_args()

    if args.command not in commands:
        raise ConfigurationError("Unknown command {}".format(args.command))
    for name in ("count", "threads", "host_increment", "samples"):
        if getattr(args, name) < 1:
            raise ConfigurationError("--{} must be positive".format(name.replace("_", "-")))
    if args.order < 1:
        raise ConfigurationError("--order must be at least 1")
    if args.epsilon <= 0:
        raise ConfigurationError("--epsilon must be positive")
    if args.degree < 0:
        raise ConfigurationError("--degree must be non negative")

    args.mesh_data = None
    args.complex = None
    if args.mesh is not None:
        args.mesh_data = load_mesh(args.mesh)
        args.complex = args.mesh_data.complex
    elif args.command != "smooth-test":
        raise ConfigurationError("--mesh is required by {}".format(args.command))

    if args.complex is not None:
        cx = args.complex
        if args.k is not None and not 0 <= args.k <= cx.dim:
            raise ConfigurationError("--k must lie in [0, {}]".format(cx.dim))
        if args.command == "tensor-check" and not hasattr(cx, "factor_complexes"):
            raise ConfigurationError("tensor-check needs a product mesh")
        if args.command == "dual" and not cx.is_simplicial:
            raise ConfigurationError("dual needs a simplicial mesh")

    args.alpha = None
    if args.weight_alpha is not None:
        args.alpha = parse_alpha(args.weight_alpha)
        if args.complex is not None and len(args.alpha) != args.complex.ambient_dim:
            raise ConfigurationError(
                "--weight-alpha has {} entries, the mesh lives in R^{}".format(
                    len(args.alpha), args.complex.ambient_dim
                )
            )
    if args.mirrors == "upwind" and args.alpha is None:
        raise ConfigurationError("--mirrors upwind needs --weight-alpha")

    args.order_spec = order_specification(args)
    args.system = None
    if args.complex is not None and args.command not in ("dual", "tensor-check"):
        args.system = build_system(args.complex, args.order_spec, args.threads, args.verbose)

    if args.out is None:
        args.out = create_file_name(args)

    return args


def get_parser():
    """
    Defines and returns the parser of the command line tool, one
    sub-parser per command sharing the same flags.
    """
    parser = argparse.ArgumentParser(
        description="Finite element systems: construction and verification."
    )
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument(
        "--mesh",
        type=str,
        default=None,
        help="Mesh file in JSON format, or the name of a bundled fixture.",
    )
    shared.add_argument(
        "--order",
        type=int,
        default=1,
        help="Constant order of the element system (1 gives Whitney forms).",
    )
    shared.add_argument(
        "--orders",
        type=str,
        default=None,
        help=(
            "JSON orders file with keys family (trimmed or polynomial), default,"
            " per_cell and drop. Overrides --order and the orders of the mesh."
        ),
    )
    shared.add_argument(
        "--family",
        type=str,
        default="trimmed",
        choices=["trimmed", "polynomial"],
        help="Element family used with --order.",
    )
    shared.add_argument(
        "--k",
        type=int,
        default=None,
        help="Form degree of the command (eigenvalues, basis export).",
    )
    shared.add_argument(
        "--count",
        type=int,
        default=6,
        help="Number of smallest nonzero eigenvalues to report.",
    )
    shared.add_argument(
        "--degree",
        type=int,
        default=2,
        help="Polynomial degree of the random test forms.",
    )
    shared.add_argument(
        "--samples",
        type=int,
        default=2,
        help="Number of random test forms per degree.",
    )
    shared.add_argument(
        "--mirrors",
        type=str,
        default="canonical",
        choices=["canonical", "l2", "harmonic", "upwind"],
        help=(
            "Mirror system of interp-test: canonical trimmed mirrors, plain L2"
            " mirrors, harmonic mirrors, or harmonic mirrors of the upwinded"
            " products given by --weight-alpha."
        ),
    )
    shared.add_argument(
        "--weight-alpha",
        dest="weight_alpha",
        type=str,
        default=None,
        help="Constant flow field of the upwinded products, as 'a,b' or 'a,b,c'.",
    )
    shared.add_argument(
        "--epsilon",
        type=float,
        default=0.05,
        help="Relative radius of the regularization balls.",
    )
    shared.add_argument(
        "--host-increment",
        dest="host_increment",
        type=int,
        default=1,
        help="Order increment of the host space of the mirror functionals.",
    )
    shared.add_argument("--seed", type=int, default=0, help="Random seed.")
    shared.add_argument(
        "--threads",
        type=int,
        default=1,
        help="Worker threads of the per cell checks. Results do not depend on it.",
    )
    shared.add_argument(
        "--out",
        type=str,
        default=None,
        help="Output path (without extension). Defaults to a name built from the flags.",
    )
    shared.add_argument("--name_flag", default="", type=str)
    shared.add_argument(
        "--verbose",
        dest="verbose",
        action="store_true",
        help="Print progress messages and progress bars.",
    )
    shared.set_defaults(verbose=False)

    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "check": "Compatibility report of the element system (exit 1 if not compatible).",
        "betti": "Betti numbers of the complex and of the discrete De Rham complex.",
        "basis": "Global basis of degree k and the canonical degrees of freedom.",
        "dual": "Dual complex and its canonical locally harmonic basis.",
        "eig": "Smallest nonzero eigenvalues of the Hodge Laplacian d*d in degree k.",
        "interp-test": "Commuting diagram report of an interpolator built from mirrors.",
        "tensor-check": "Tensor product verdicts on a product mesh.",
        "smooth-test": "Kernel moments, reproduction and commutation of the regularizer.",
    }
    for name in commands:
        sub.add_parser(name, parents=[shared], help=helps[name])
    return parser
