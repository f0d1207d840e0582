#!/usr/bin/env python3
"""Export torchvision VGG-16 conv weights to the delight tensor container.

The training CLI accepts the resulting file via `train --extractor vgg16.dlw`.
Without it, training falls back to the deterministic miniature extractor, so
this script is only needed for full-quality perceptual features.

Usage:
    python3 tools/export_vgg16.py --out vgg16.dlw
"""

import argparse
import struct

MAGIC = 0x31544B4354_4C44
VERSION = 1

# Stage boundaries: the conv layers before each of the first five max-pools.
STAGE_CONVS = [2, 2, 3, 3, 3]


def write_tensor(fh, name: str, array) -> None:
    data = array.detach().cpu().contiguous().float().numpy()
    dims = list(data.shape) + [1] * (4 - data.ndim)
    fh.write(struct.pack("<I", len(name)))
    fh.write(name.encode())
    fh.write(struct.pack("<4I", *dims))
    fh.write(data.tobytes())


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output weights file")
    args = parser.parse_args()

    import torch
    from torchvision.models import VGG16_Weights, vgg16

    net = vgg16(weights=VGG16_Weights.IMAGENET1K_V1).features.eval()
    convs = [m for m in net if isinstance(m, torch.nn.Conv2d)]
    assert len(convs) == sum(STAGE_CONVS), f"unexpected conv count {len(convs)}"

    with open(args.out, "wb") as fh:
        fh.write(struct.pack("<Q", MAGIC))
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", 0))  # config hash, unused by the extractor
        fh.write(struct.pack("<Q", 0))  # step
        fh.write(struct.pack("<I", 0))  # flags
        fh.write(struct.pack("<I", 2 * len(convs)))
        i = 0
        for stage, count in enumerate(STAGE_CONVS):
            for ci in range(count):
                conv = convs[i]
                i += 1
                base = f"stage{stage}.conv{ci}"
                write_tensor(fh, base + ".w", conv.weight)
                bias = conv.bias.reshape(1, -1, 1, 1)
                write_tensor(fh, base + ".b", bias)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
