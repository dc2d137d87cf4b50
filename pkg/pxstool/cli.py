#!/usr/bin/env python3
"""
PXS command line tool

Usage:
    pxs run --synth scenes/room.scene --frames 300 --mesh out/
    pxs run --dataset rec/ --compress out.prxy --metrics
    pxs synth scenes/room.scene -o rec/ --frames 60
    pxs compress --dataset rec/ -o out.prxy --fill
    pxs decompress out.prxy --dataset rec/ --frame 10 -o frame10.png
    pxs mesh out.prxy -o meshes/
    pxs metrics out.prxy --synth scenes/room.scene
    pxs bench --synth scenes/room.scene --frames 50

Logs go to stderr; reports are JSON lines on stdout (or --report FILE).
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image

from pxs import __version__
from pxs._logging import configure_logging
from pxs.codec import decompress_frame, read_archive
from pxs.config import PipelineConfig, load_config
from pxs.dataset import Dataset, load_dataset
from pxs.engine import PipelineOutputs, bench, measure_compression, run_pipeline
from pxs.frame import CameraIntrinsics, CameraPose
from pxs.mesh import export_scene
from pxs.synth import SceneStream, evaluate, load_scene, write_synthetic_dataset
from pxs.types import PxsError, PxsValidationError

from .report import ReportWriter

logger = logging.getLogger("pxstool")


# ============== Arguments ==============


def _add_source(parser: argparse.ArgumentParser, required: bool = True) -> None:
    group = parser.add_mutually_exclusive_group(required=required)
    group.add_argument('--dataset', type=Path, help='Recorded dataset directory')
    group.add_argument('--synth', type=Path, help='Synthetic .scene file')
    parser.add_argument('--frames', type=int, default=None, help='Limit the number of frames')
    parser.add_argument('--width', type=int, default=320, help='Synthetic image width (default: 320)')
    parser.add_argument('--height', type=int, default=240, help='Synthetic image height (default: 240)')
    parser.add_argument('--fov', type=float, nargs=2, default=(60.0, 45.0), metavar=('H', 'V'),
                        help='Synthetic field of view in degrees (default: 60 45)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Proxy superstructures for RGB-D streams',
        prog='pxs'
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('--config', type=Path, help='Config file (key = value lines)')
    parser.add_argument('--seed', type=int, default=None, help='Random seed (overrides config)')
    parser.add_argument('--threads', type=int, default=None, help='Worker threads (overrides config)')
    parser.add_argument('--report', type=Path, default=None, help='Append JSON-lines reports to FILE')
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help='Log progress to stderr (-vv for per-frame timings)')

    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='Build the superstructure and write the selected outputs')
    _add_source(run)
    run.add_argument('--enhanced', type=Path, help='Write filtered frames to DIR')
    run.add_argument('--compress', type=Path, help='Write the archive to FILE')
    run.add_argument('--mesh', type=Path, help='Export meshes to DIR')
    run.add_argument('--fill', action='store_true', help='Fill holes before compressing or meshing')
    run.add_argument('--metrics', action='store_true', help='Report PSNR and compression ratios')
    run.add_argument('--per-frame', action='store_true', help='Also report every frame')

    synth = sub.add_parser('synth', help='Render a synthetic scene into a dataset directory')
    synth.add_argument('scene', type=Path, help='Path to .scene file')
    synth.add_argument('-o', '--output-dir', type=Path, required=True, help='Dataset directory')
    synth.add_argument('--frames', type=int, default=None, help='Override @frames')
    synth.add_argument('--width', type=int, default=320)
    synth.add_argument('--height', type=int, default=240)
    synth.add_argument('--fov', type=float, nargs=2, default=(60.0, 45.0), metavar=('H', 'V'))

    compress = sub.add_parser('compress', help='Build the superstructure and write an archive')
    _add_source(compress)
    compress.add_argument('-o', '--output', type=Path, required=True, help='Archive path')
    compress.add_argument('--fill', action='store_true', help='Fill holes before compressing')

    decompress = sub.add_parser('decompress', help='Re-synthesize one depth frame from an archive')
    decompress.add_argument('archive', type=Path)
    _add_source(decompress, required=False)
    decompress.add_argument('--frame', type=int, default=0, help='Frame whose pose is used (default: 0)')
    decompress.add_argument('--pose', type=float, nargs=16, default=None, metavar='M',
                            help='Row-major 4x4 camera-to-world matrix instead of a source pose')
    decompress.add_argument('-o', '--output', type=Path, required=True, help='16-bit depth PNG')

    mesh = sub.add_parser('mesh', help='Export an archive as OBJ meshes')
    mesh.add_argument('archive', type=Path)
    mesh.add_argument('-o', '--output-dir', type=Path, required=True)
    mesh.add_argument('--name', default='scene', help='Base name of the OBJ/MTL files')

    metrics = sub.add_parser('metrics', help='Compare an archive with the frames it encodes')
    metrics.add_argument('archive', type=Path)
    _add_source(metrics)

    bench_cmd = sub.add_parser('bench', help='Time the per-frame pipeline')
    _add_source(bench_cmd)
    return parser


# ============== Helpers ==============


def _config(args: argparse.Namespace) -> PipelineConfig:
    return load_config(args.config, {'seed': args.seed, 'threads': args.threads})


def _open_source(args: argparse.Namespace):
    """(frames, synthetic scene or None) for --dataset / --synth."""
    if getattr(args, 'dataset', None) is not None:
        dataset: Dataset = load_dataset(args.dataset)
        if args.frames is not None:
            return _Truncated(dataset, args.frames), None
        return dataset, None
    if getattr(args, 'synth', None) is not None:
        scene = load_scene(args.synth, args.frames)
        intrinsics = CameraIntrinsics.from_degrees(args.fov[0], args.fov[1], args.width, args.height)
        return SceneStream(scene, intrinsics), scene
    return None, None


class _Truncated:
    """First ``count`` frames of a dataset, re-iterable."""

    def __init__(self, dataset: Dataset, count: int):
        self.intrinsics = dataset.intrinsics
        self.poses = dataset.poses[:count]
        self._dataset = dataset
        self._count = max(0, min(count, len(dataset)))

    def __len__(self) -> int:
        return self._count

    def __iter__(self):
        for i in range(self._count):
            yield self._dataset.frame(i)


def _source_pose(args: argparse.Namespace) -> Tuple[CameraPose, Optional[CameraIntrinsics]]:
    if args.pose is not None:
        return CameraPose.from_matrix(args.pose), None
    source, scene = _open_source(args)
    if source is None:
        raise PxsValidationError("decompress needs --pose, --dataset or --synth")
    if not 0 <= args.frame < len(source):
        raise PxsValidationError(f"frame {args.frame} outside source of {len(source)} frame(s)")
    if scene is not None:
        return scene.path[args.frame], source.intrinsics
    return source.poses[args.frame], source.intrinsics


# ============== Commands ==============


def cmd_run(args: argparse.Namespace, out: ReportWriter) -> int:
    config = _config(args)
    source, scene = _open_source(args)
    outputs = PipelineOutputs(
        enhanced=args.enhanced,
        archive=args.compress,
        mesh=args.mesh,
        fill=args.fill,
        metrics=args.metrics,
    )
    state, report = run_pipeline(source, config, outputs)
    if args.per_frame:
        for frame_report in report.frame_reports:
            out.write('frame', frame_report)
    out.write('run', report.to_dict())
    if scene is not None and args.metrics:
        evaluation = evaluate(state, scene, source.intrinsics)
        for shape_report in evaluation.shapes:
            out.write('shape', shape_report.to_dict())
    return 0


def cmd_synth(args: argparse.Namespace, out: ReportWriter) -> int:
    scene = load_scene(args.scene, args.frames)
    intrinsics = CameraIntrinsics.from_degrees(args.fov[0], args.fov[1], args.width, args.height)
    root = write_synthetic_dataset(scene, args.output_dir, intrinsics)
    logger.info(f"Rendered {len(scene.path)} frame(s) of {scene.name!r} to {root}")
    out.write('synth', {'scene': scene.name, 'frames': len(scene.path), 'output': root})
    return 0


def cmd_compress(args: argparse.Namespace, out: ReportWriter) -> int:
    config = _config(args)
    source, _ = _open_source(args)
    _, report = run_pipeline(source, config, PipelineOutputs(archive=args.output, fill=args.fill))
    logger.info(f"Compressed {report.frames} frame(s) into {report.archive_bytes} bytes")
    out.write('compress', {
        'frames': report.frames,
        'proxies': report.proxies,
        'archive': args.output,
        'bytes': report.archive_bytes,
        'filled_cells': None if report.filled is None else report.filled.total,
    })
    return 0


def cmd_decompress(args: argparse.Namespace, out: ReportWriter) -> int:
    state = read_archive(args.archive)
    pose, source_intrinsics = _source_pose(args)
    intrinsics = state.intrinsics or source_intrinsics
    if intrinsics is None:
        raise PxsValidationError("archive has no intrinsics; pass --dataset or --synth")
    depth = decompress_frame(state, intrinsics, pose)
    logger.info(f"Re-synthesized frame {args.frame} from {len(state.proxies)} proxies")
    stored = np.clip(np.rint(depth / intrinsics.depth_scale), 0, 65535).astype(np.uint16)
    args.output.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(stored).save(args.output)
    out.write('decompress', {
        'archive': args.archive,
        'frame': args.frame,
        'output': args.output,
        'valid_pixels': int(np.count_nonzero(depth)),
    })
    return 0


def cmd_mesh(args: argparse.Namespace, out: ReportWriter) -> int:
    state = read_archive(args.archive)
    result = export_scene(state, args.output_dir, args.name)
    logger.info(f"Exported {len(result.meshes)} mesh(es) to {result.obj_path}")
    out.write('mesh', {
        'obj': result.obj_path,
        'meshes': len(result.meshes),
        'quads': sum(m.quad_count for m in result.meshes),
        'triangles': sum(m.triangle_count for m in result.meshes),
        'seconds': result.seconds,
    })
    return 0


def cmd_metrics(args: argparse.Namespace, out: ReportWriter) -> int:
    config = _config(args)
    state = read_archive(args.archive)
    source, scene = _open_source(args)
    mean_psnr, mean_ratio, whole = measure_compression(state, source, config.psnr_peak, config.quant_step)
    out.write('metrics', {
        'archive': args.archive,
        'bytes': args.archive.stat().st_size,
        'proxies': len(state.proxies),
        'psnr': mean_psnr,
        'frame_ratio': mean_ratio,
        'scene_ratio': whole,
    })
    if scene is not None:
        for shape_report in evaluate(state, scene).shapes:
            out.write('shape', shape_report.to_dict())
    return 0


def cmd_bench(args: argparse.Namespace, out: ReportWriter) -> int:
    config = _config(args)
    source, _ = _open_source(args)
    out.write('bench', bench(source, config).to_dict())
    return 0


COMMANDS = {
    'run': cmd_run,
    'synth': cmd_synth,
    'compress': cmd_compress,
    'decompress': cmd_decompress,
    'mesh': cmd_mesh,
    'metrics': cmd_metrics,
    'bench': cmd_bench,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.verbose:
        configure_logging(level=logging.DEBUG if args.verbose > 1 else logging.INFO)

    try:
        with ReportWriter(args.report) as out:
            return COMMANDS[args.command](args, out)
    except PxsError as e:
        logger.debug(f"{type(e).__name__}: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"Error: {e}", file=sys.stderr)
        if args.verbose:
            import traceback
            traceback.print_exc()
        return 1


if __name__ == '__main__':
    sys.exit(main())
