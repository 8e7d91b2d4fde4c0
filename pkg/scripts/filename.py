import os


def create_file_name(args):
    filename = ""

    filename += args.command
    if args.mesh is not None:
        mesh = os.path.splitext(os.path.basename(args.mesh))[0]
        filename += "_mesh=" + mesh

    if args.orders is not None:
        filename += "_orders=" + os.path.splitext(os.path.basename(args.orders))[0]
    elif args.command not in ("dual", "smooth-test"):
        filename += "_" + args.family + "=" + str(args.order)

    if args.k is not None:
        filename += "_k=" + str(args.k)
    if args.command == "eig":
        filename += "_count=" + str(args.count)
    if args.command == "interp-test":
        filename += "_mirrors=" + args.mirrors
        if args.weight_alpha is not None:
            filename += "_alpha=" + args.weight_alpha.replace(",", "-").replace("/", "o")
    if args.command == "smooth-test":
        filename += "_eps=" + str(args.epsilon)
    if args.seed != 0:
        filename += "_seed=" + str(args.seed)

    filename += args.name_flag

    return os.path.join("results", filename)
