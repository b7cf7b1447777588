#!/usr/bin/env python3
"""Write torchvision VGG19 convolution weights in the T2VW format read by t2v.

    python3 tools/export_vgg19_weights.py vgg19.t2vw            # ImageNet weights (downloads)
    python3 tools/export_vgg19_weights.py vgg19.t2vw --state-dict vgg19.pth
"""

import argparse
import hashlib
import struct

import torch
import torchvision

# Index of each convolution inside torchvision's vgg19().features.
CONV_INDICES = [0, 2, 5, 7, 10, 12, 14, 16, 19, 21, 23, 25, 28, 30, 32, 34]
CONV_NAMES = [f"conv{b}_{i}" for b, n in [(1, 2), (2, 2), (3, 4), (4, 4), (5, 4)] for i in range(1, n + 1)]


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("output")
    parser.add_argument("--state-dict", help="local vgg19 state dict instead of downloading")
    parser.add_argument("--last", default="conv5_4", help="last layer to export (at least conv4_2)")
    args = parser.parse_args()

    if args.state_dict:
        model = torchvision.models.vgg19()
        model.load_state_dict(torch.load(args.state_dict, map_location="cpu"))
    else:
        model = torchvision.models.vgg19(weights=torchvision.models.VGG19_Weights.IMAGENET1K_V1)
    state = model.features.state_dict()

    if args.last not in CONV_NAMES or CONV_NAMES.index(args.last) < CONV_NAMES.index("conv4_2"):
        parser.error("--last must name a layer from conv4_2 onwards")
    count = CONV_NAMES.index(args.last) + 1

    tensors = []
    for name, index in zip(CONV_NAMES[:count], CONV_INDICES):
        tensors.append((f"{name}.weight", state[f"{index}.weight"]))
        tensors.append((f"{name}.bias", state[f"{index}.bias"]))

    with open(args.output, "wb") as out:
        out.write(b"T2VW")
        out.write(struct.pack("<II", 1, len(tensors)))
        for name, tensor in tensors:
            data = tensor.detach().to(torch.float32).contiguous().numpy()
            out.write(struct.pack("<I", len(name)))
            out.write(name.encode())
            out.write(struct.pack("<I", data.ndim))
            out.write(struct.pack(f"<{data.ndim}i", *data.shape))
            out.write(data.astype("<f4").tobytes())

    with open(args.output, "rb") as f:
        digest = hashlib.sha256(f.read()).hexdigest()
    print(f"wrote {args.output} ({len(tensors)} tensors)")
    print(f"perceptual.sha256={digest}")


if __name__ == "__main__":
    main()
