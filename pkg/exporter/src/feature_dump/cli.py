"""feature-dump CLI: export <role>=<dir> datasets or noise validation
features for a torchvision model.

Exit codes: 0 success, 1 usage error, 2 export/data error.
"""

import argparse
import sys
from pathlib import Path

from feature_dump.errors import ExportError
from feature_dump.export import ExportJob, export_features, export_noise_validation
from feature_dump.models import list_models


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _parse_roots(pairs) -> dict:
    roots = {}
    for item in pairs or ():
        role, sep, path = item.partition("=")
        if not sep or not path:
            raise _UsageError(
                f"--data expects role=directory, got {item!r}"
            )
        if role in roots:
            raise _UsageError(f"role {role!r} given twice")
        roots[role] = path
    return roots


def _build_parser():
    parser = _Parser(
        prog="feature-dump",
        description="Export penultimate features and classifier heads "
        "from torchvision models",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--model", required=True, choices=list_models())
        p.add_argument("--weights", default=None,
                       help="torchvision weights tag, e.g. IMAGENET1K_V2 "
                            "(default: random initialization)")
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("--batch", type=int, default=32)
        p.add_argument("--device", default="cpu")
        p.add_argument("--input-size", type=int, default=224, dest="input_size")

    p_exp = sub.add_parser("export", help="export image-folder datasets")
    common(p_exp)
    p_exp.add_argument("--data", action="append", metavar="ROLE=DIR",
                       help="dataset directory for a role "
                            "(id_train/id_test/ood); repeatable")
    p_exp.add_argument("--data-root", type=Path, default=None,
                       help="directory whose id_train/id_test/ood "
                            "subdirectories are exported")
    p_exp.add_argument("--save-logits", action="store_true")

    p_noise = sub.add_parser("noise", help="export Gaussian-noise validation features")
    common(p_noise)
    p_noise.add_argument("--count", type=int, default=1000)
    p_noise.add_argument("--seed", type=int, default=0)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "export":
            roots = _parse_roots(args.data)
            if args.data_root is not None:
                for role in ("id_train", "id_test", "ood"):
                    sub = Path(args.data_root) / role
                    if sub.is_dir():
                        roots.setdefault(role, sub)
            job = ExportJob(
                model=args.model,
                weights=args.weights,
                data_roots=roots,
                batch_size=args.batch,
                device=args.device,
                out_dir=args.out,
                input_size=args.input_size,
                save_logits=args.save_logits,
            )
            manifest = export_features(job)
            print(f"wrote {manifest}")
        else:
            job = ExportJob(
                model=args.model,
                weights=args.weights,
                batch_size=args.batch,
                device=args.device,
                out_dir=args.out,
                input_size=args.input_size,
            )
            path = export_noise_validation(job, args.count, args.seed)
            print(f"wrote {path}")
        return 0
    except _UsageError as exc:
        print(f"feature-dump: usage error: {exc}", file=sys.stderr)
        return 1
    except ExportError as exc:
        print(f"feature-dump: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"feature-dump: i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
