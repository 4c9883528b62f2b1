"""Operational entry points: one binary, one subcommand per service.

    cipdev device    --config cfg.json [--deterministic]
    cipdev simopac   --config cfg.json [--data-dir DIR]
    cipdev tagsim    [--port N]
    cipdev vitalsim  [--port N] [--kinds HR,TEMP] [--interval S] [--count N]
    cipdev cip       encode|decode --in FILE [--out FILE]
    cipdev scenario  run SCRIPT [--report FILE]

Exit codes: 0 success, 1 runtime or scenario failure, 2 bad configuration,
3 port already in use.
"""

from __future__ import annotations

import argparse
import errno
import json
import logging
import random
import signal
import socket
import sys
import threading
import time
from pathlib import Path

from . import cip_codec
from .config import AppConfig, BadConfig, load_config
from .device import Device
from .rfid_link import ReaderLinkDown, TagSimulator
from .scenario import ScenarioRunner
from .simopac_server import CorruptLogLine, SimopacServer
from .vitals import DEFAULT_THRESHOLDS, UNITS, VitalKind

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_BAD_CONFIG = 2
EXIT_PORT_IN_USE = 3


class PortInUse(Exception):
    pass


def _guard_ports(builder):
    try:
        return builder()
    except OSError as exc:
        if exc.errno == errno.EADDRINUSE:
            raise PortInUse(str(exc))
        raise


def _wait_for_signal() -> None:
    done = threading.Event()

    def handler(signum, frame):
        done.set()

    signal.signal(signal.SIGINT, handler)
    signal.signal(signal.SIGTERM, handler)
    done.wait()


def _load(args) -> AppConfig:
    return load_config(args.config) if args.config else AppConfig()


# subcommands ----------------------------------------------------------------

def cmd_device(args) -> int:
    config = _load(args)
    if args.http_port is not None:
        config.device.http_port = args.http_port
    if args.vitals_port is not None:
        config.vitals.port = args.vitals_port
    if args.reader_port is not None:
        config.reader.port = args.reader_port
    if args.deterministic:
        config.device.deterministic = True
    device = _guard_ports(lambda: Device(config))
    try:
        device.start()
    except ReaderLinkDown as exc:
        print(f"cannot reach the tag simulator: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"device api on port {device.api.port}, vitals on {device.vitals.port}")
    _wait_for_signal()
    device.stop()
    return EXIT_OK


def cmd_simopac(args) -> int:
    config = _load(args)
    section = config.simopac
    if args.mllp_port is not None:
        section.mllp_port = args.mllp_port
    if args.http_port is not None:
        section.http_port = args.http_port
    if args.data_dir is not None:
        section.data_dir = args.data_dir
    server = _guard_ports(lambda: SimopacServer(
        data_dir=section.data_dir, users=config.users,
        patients=section.patients, mllp_host=section.mllp_host,
        mllp_port=section.mllp_port, http_host=section.http_host,
        http_port=section.http_port))
    try:
        server.start()
    except CorruptLogLine as exc:
        print(f"cannot restore store: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    print(f"simopac stub: mllp {server.mllp_port}, http {server.http_port}")
    _wait_for_signal()
    server.stop()
    return EXIT_OK


def cmd_tagsim(args) -> int:
    simulator = _guard_ports(lambda: TagSimulator(host=args.host, port=args.port))
    simulator.start()
    print(f"tag simulator on port {simulator.port}")
    _wait_for_signal()
    simulator.stop()
    return EXIT_OK


def cmd_vitalsim(args) -> int:
    kinds = []
    for name in args.kinds.split(","):
        try:
            kinds.append(VitalKind(name.strip()))
        except ValueError:
            print(f"unknown vital kind {name!r}", file=sys.stderr)
            return EXIT_BAD_CONFIG
    rng = random.Random(args.seed)
    values = {k: (DEFAULT_THRESHOLDS[k][0] + DEFAULT_THRESHOLDS[k][1]) / 2
              for k in kinds}
    sent = 0
    try:
        with socket.create_connection((args.host, args.port), timeout=5) as sock:
            while args.count <= 0 or sent < args.count:
                for kind in kinds:
                    low, high = DEFAULT_THRESHOLDS[kind]
                    step = (high - low) / 20
                    values[kind] = min(high, max(
                        low, values[kind] + rng.uniform(-step, step)))
                    line = (f"VITAL {args.device_id} {kind.value} "
                            f"{values[kind]:.1f} {UNITS[kind]} {int(time.time())}\n")
                    sock.sendall(line.encode())
                    sent += 1
                    if args.count > 0 and sent >= args.count:
                        break
                time.sleep(args.interval)
    except OSError as exc:
        print(f"vitals link failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_cip(args) -> int:
    try:
        if args.action == "encode":
            card = cip_codec.card_from_json(
                json.loads(Path(args.infile).read_text(encoding="utf-8")))
            image = cip_codec.encode_cip(card)
            Path(args.out).write_bytes(image)
            print(json.dumps({"ok": True, "bytes": len(image)}))
        else:
            image = Path(args.infile).read_bytes()
            card = cip_codec.decode_cip(image)
            text = json.dumps(cip_codec.card_to_json(card), indent=2)
            if args.out:
                Path(args.out).write_text(text + "\n", encoding="utf-8")
            else:
                print(text)
        return EXIT_OK
    except (cip_codec.CipError, json.JSONDecodeError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}))
        return EXIT_FAILURE


def cmd_scenario(args) -> int:
    host, port = args.vitals.rsplit(":", 1)
    reader_host, reader_port = args.reader.rsplit(":", 1)
    try:
        runner = ScenarioRunner.from_file(
            args.script, device_url=args.device_url,
            simopac_url=args.simopac_url,
            vitals_addr=(host, int(port)),
            reader_addr=(reader_host, int(reader_port)))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot load script: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    report = runner.run()
    text = json.dumps(report, indent=2)
    print(text)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK if report["passed"] else EXIT_FAILURE


# parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cipdev",
        description="RFID patient identification device, simulated at desk scale")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("device", help="run the device")
    p.add_argument("--config")
    p.add_argument("--http-port", type=int)
    p.add_argument("--vitals-port", type=int)
    p.add_argument("--reader-port", type=int)
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=cmd_device)

    p = sub.add_parser("simopac", help="run the central-system stub")
    p.add_argument("--config")
    p.add_argument("--mllp-port", type=int)
    p.add_argument("--http-port", type=int)
    p.add_argument("--data-dir")
    p.set_defaults(func=cmd_simopac)

    p = sub.add_parser("tagsim", help="run the tag-field simulator")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=4501)
    p.set_defaults(func=cmd_tagsim)

    p = sub.add_parser("vitalsim", help="stream simulated vitals to the device")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=4502)
    p.add_argument("--device-id", default="sim0")
    p.add_argument("--kinds", default="HR,TEMP")
    p.add_argument("--interval", type=float, default=1.0)
    p.add_argument("--count", type=int, default=0, help="0 = run forever")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_vitalsim)

    p = sub.add_parser("cip", help="encode/decode card images")
    p.add_argument("action", choices=["encode", "decode"])
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cip)

    p = sub.add_parser("scenario", help="run a scripted scenario")
    p.add_argument("action", choices=["run"])
    p.add_argument("script")
    p.add_argument("--device-url", default="http://127.0.0.1:4500")
    p.add_argument("--simopac-url", default="http://127.0.0.1:4504")
    p.add_argument("--vitals", default="127.0.0.1:4502")
    p.add_argument("--reader", default="127.0.0.1:4501")
    p.add_argument("--report")
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")
    if args.command == "cip" and args.action == "encode" and not args.out:
        print("encode requires --out", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        return args.func(args)
    except BadConfig as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except PortInUse as exc:
        print(f"port in use: {exc}", file=sys.stderr)
        return EXIT_PORT_IN_USE


if __name__ == "__main__":
    sys.exit(main())
