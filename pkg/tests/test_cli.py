"""CLI entry points: cip codec commands, config errors, port conflicts."""

import json
import socket

from cipdev.cli import (
    EXIT_BAD_CONFIG, EXIT_FAILURE, EXIT_OK, EXIT_PORT_IN_USE, main,
)


def test_cip_encode_decode_roundtrip(tmp_path, capsys):
    card = {"serial": 42, "blood_group": "A", "rh": "Positive",
            "language": "ro", "server_uri": "http://sim/",
            "allergies": ["penicilina"], "conditions": [],
            "last_modified": 0, "modifier_id": ""}
    card_path = tmp_path / "card.json"
    card_path.write_text(json.dumps(card))
    image_path = tmp_path / "card.bin"

    assert main(["cip", "encode", "--in", str(card_path),
                 "--out", str(image_path)]) == EXIT_OK
    encoded_report = json.loads(capsys.readouterr().out)
    assert encoded_report["ok"] is True
    assert image_path.stat().st_size == encoded_report["bytes"]

    assert main(["cip", "decode", "--in", str(image_path)]) == EXIT_OK
    decoded = json.loads(capsys.readouterr().out)
    for key, value in card.items():
        assert decoded[key] == value


def test_cip_encode_minimal_is_39_bytes(tmp_path, capsys):
    card_path = tmp_path / "m.json"
    card_path.write_text(json.dumps({
        "serial": 1, "language": "en", "server_uri": "http://s/",
        "last_modified": 0, "modifier_id": ""}))
    out = tmp_path / "m.bin"
    assert main(["cip", "encode", "--in", str(card_path),
                 "--out", str(out)]) == EXIT_OK
    assert out.stat().st_size == 39


def test_cip_decode_corrupt_image(tmp_path, capsys):
    card_path = tmp_path / "card.json"
    card_path.write_text(json.dumps({"serial": 1}))
    image_path = tmp_path / "card.bin"
    main(["cip", "encode", "--in", str(card_path), "--out", str(image_path)])
    capsys.readouterr()
    corrupted = bytearray(image_path.read_bytes())
    corrupted[5] ^= 0xFF
    image_path.write_bytes(bytes(corrupted))

    assert main(["cip", "decode", "--in", str(image_path)]) == EXIT_FAILURE
    error = json.loads(capsys.readouterr().out)
    assert error["error"] == "CrcMismatch"


def test_cip_encode_invalid_card(tmp_path, capsys):
    card_path = tmp_path / "bad.json"
    card_path.write_text(json.dumps({"serial": 0}))
    assert main(["cip", "encode", "--in", str(card_path),
                 "--out", str(tmp_path / "x.bin")]) == EXIT_FAILURE
    error = json.loads(capsys.readouterr().out)
    assert error["error"] == "InvariantViolation"


def test_bad_config_reports_line(tmp_path, capsys):
    config = tmp_path / "cfg.json"
    config.write_text('{\n  "device": {\n    oops\n}')
    code = main(["device", "--config", str(config)])
    assert code == EXIT_BAD_CONFIG
    err = capsys.readouterr().err
    assert "line 3" in err


def test_unknown_config_section(tmp_path, capsys):
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"devices": {}}))
    assert main(["device", "--config", str(config)]) == EXIT_BAD_CONFIG


def test_port_in_use(capsys):
    blocker = socket.socket()
    blocker.bind(("127.0.0.1", 0))
    blocker.listen(1)
    port = blocker.getsockname()[1]
    try:
        assert main(["tagsim", "--port", str(port)]) == EXIT_PORT_IN_USE
    finally:
        blocker.close()


def test_device_without_tagsim_fails_cleanly(tmp_path, capsys):
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({
        "device": {"http_port": 0}, "vitals": {"port": 0},
        "reader": {"port": 1}}))
    assert main(["device", "--config", str(config)]) == EXIT_FAILURE
    assert "tag simulator" in capsys.readouterr().err


def test_scenario_missing_script(capsys):
    assert main(["scenario", "run", "/nonexistent.json"]) == EXIT_BAD_CONFIG
