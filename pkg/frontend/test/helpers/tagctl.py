#!/usr/bin/env python3
"""Test control: seed or remove tags on a live tag simulator."""

import argparse

from cipdev.cip_codec import CipCard, Rh, encode_cip
from cipdev.rfid_link import ReaderClient


def main():
    parser = argparse.ArgumentParser()
    sub = parser.add_subparsers(dest="cmd", required=True)

    add = sub.add_parser("add")
    add.add_argument("--reader-port", type=int, required=True)
    add.add_argument("--uid", type=int, required=True)
    add.add_argument("--serial", type=int, required=True)
    add.add_argument("--uri", required=True)
    add.add_argument("--language", default="ro")

    remove = sub.add_parser("remove")
    remove.add_argument("--reader-port", type=int, required=True)
    remove.add_argument("--uid", type=int, required=True)

    args = parser.parse_args()
    client = ReaderClient(port=args.reader_port)
    client.connect()
    if args.cmd == "add":
        card = CipCard(serial=args.serial, rh=Rh.POSITIVE,
                       language=args.language, server_uri=args.uri,
                       allergies=("penicilina",))
        client.add_tag(args.uid, encode_cip(card))
    else:
        client.remove_tag(args.uid)
    client.close()
    print("ok")


if __name__ == "__main__":
    main()
