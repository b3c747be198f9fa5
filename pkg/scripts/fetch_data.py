"""Fetch Cora (raw .content/.cites) and Citeseer (Planetoid ind.* pickles) into data/.

Both are shipped inside the PGL source distribution on PyPI, which is
reachable from most mirrors. Files are extracted and checked against pinned
sha256 digests.

    python3 scripts/fetch_data.py [--dest data] [--archive pgl-2.2.6.tar.gz]
"""

import argparse
import hashlib
import sys
import tarfile
import tempfile
import urllib.request
from pathlib import Path

SDIST_URL = ("https://files.pythonhosted.org/packages/fc/76/"
             "f85e59a3543a6b0ad995dee80c562b58f33e769a25282a440d0c9a5e2333/pgl-2.2.6.tar.gz")
MEMBER_ROOT = "pgl-2.2.6/pgl/data/"
EXPECTED = {
    "cora/cora.content": "0955f03baddbea9911f53814d7781129b71b066e5b442d0a5bd51f439c442082",
    "cora/cora.cites": "316d45e0e48387392c70cc3e3915e43f6f5c147ea45c973971e2c9140aaadacf",
    "citeseer/ind.citeseer.x": "d20de19150741e555de0ed037195630fc194114ebc7fd72ced62810148aa22f6",
    "citeseer/ind.citeseer.y": "8ba87e515d8e3ee3cf52f6d2c5b86aa73f11ecad825a808455209ec26cd54924",
    "citeseer/ind.citeseer.tx": "539a8906a2da97628d212f2fdd668c109a8b3f0d36574b59e5d3fd5b5303da21",
    "citeseer/ind.citeseer.ty": "55e5bd1ba1e733a04598753ad1a8d57957f4b8f89e74519f41f4f4938767e4ce",
    "citeseer/ind.citeseer.allx": "2ac30345d95c9ec933a817ee0bdd6a5f077f8c184a20e696910192d534414668",
    "citeseer/ind.citeseer.ally": "f704b2d986dde6c2669934de1f3ae5696a6cf9455c0f6b2646a2d135ea0a1c95",
    "citeseer/ind.citeseer.graph": "d79a4ef9d3e7169aee8946145f6b7306e35bc79bffad26346cfb94e10e9912a7",
    "citeseer/ind.citeseer.test.index": "2af990671580b6b2df5d158d1038f8292e30c9cd821b5453f399659b25b723d4",
}


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--dest", default=str(Path(__file__).resolve().parents[1] / "data"))
    ap.add_argument("--archive", help="use an already downloaded sdist instead of fetching")
    args = ap.parse_args(argv)

    out = Path(args.dest)
    if all((out / n).exists() and sha256(out / n) == h for n, h in EXPECTED.items()):
        print(f"{out} already up to date")
        return 0
    with tempfile.TemporaryDirectory() as tmp:
        archive = Path(args.archive) if args.archive else Path(tmp) / "pgl.tar.gz"
        if not args.archive:
            print(f"downloading {SDIST_URL}")
            urllib.request.urlretrieve(SDIST_URL, archive)
        with tarfile.open(archive) as tar:
            for name in EXPECTED:
                member = tar.getmember(MEMBER_ROOT + name)
                (out / name).parent.mkdir(parents=True, exist_ok=True)
                (out / name).write_bytes(tar.extractfile(member).read())
    bad = [n for n, h in EXPECTED.items() if sha256(out / n) != h]
    if bad:
        print(f"checksum mismatch for {bad}", file=sys.stderr)
        return 1
    print(f"wrote {len(EXPECTED)} files under {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
