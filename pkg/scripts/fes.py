import sys

sys.path.append(".")

from src.exceptions import ConfigurationError, FeecError, MeshFormatError
from utils.pipelines import runners
from utils.process_flags import get_parser, manage_experiment_configuration


def main(argv=None):
    parser = get_parser()
    args = parser.parse_args(argv)

    try:
        args = manage_experiment_configuration(args)
    except (ConfigurationError, MeshFormatError) as err:
        print("error: {}".format(err), file=sys.stderr)
        return 2
    except FeecError as err:
        # the order specification is invalid for this complex
        print("{}: {}".format(type(err).__name__, err), file=sys.stderr)
        return 1

    if args.verbose:
        print("Running {} on {}".format(args.command, args.mesh))

    try:
        report, code = runners[args.command](args)
    except FeecError as err:
        print("{}: {}".format(type(err).__name__, err), file=sys.stderr)
        return 1

    print("{}: {}".format(args.command, "ok" if code == 0 else "failed"))
    print("Results written to {}".format(args.out))
    return code


if __name__ == "__main__":
    sys.exit(main())
