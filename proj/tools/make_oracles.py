#!/usr/bin/env python3
"""Regenerates tests/support/oracles.hpp.

Reference values come from independent numerical libraries (numpy, torch,
opencv, scikit-image). Test inputs are drawn from the splitmix64 stream
mirrored by tests/support/oracle_stream.hpp so no large input literals are
needed.
"""

import numpy as np

MASK = (1 << 64) - 1


def splitmix64(seed):
    state = seed & MASK
    while True:
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        z ^= z >> 31
        yield z


def uniforms(seed, n):
    """n doubles in [0,1) with 53-bit resolution."""
    g = splitmix64(seed)
    return np.array([(next(g) >> 11) * (2.0 ** -53) for _ in range(n)], dtype=np.float64)


def fmt(v):
    s = repr(float(v))
    return s + ("" if ("." in s or "e" in s or "inf" in s or "nan" in s) else ".0")


def emit_scalar(lines, name, v):
    lines.append(f"inline constexpr double {name} = {fmt(v)};")


def emit_array(lines, name, a):
    a = np.asarray(a, dtype=np.float64).ravel()
    lines.append(f"inline constexpr double {name}[{a.size}] = {{")
    row = []
    for i, v in enumerate(a):
        row.append(fmt(v))
        if len(row) == 4 or i == a.size - 1:
            lines.append("    " + ", ".join(row) + ",")
            row = []
    lines.append("};")


def log_softmax_nll(logits, channel, pixel_mean):
    """-log softmax(logits)[channel] with the 1e-12 probability floor,
    summed or averaged over pixels per sample, averaged over batch.
    logits: (N, 2, HW)."""
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0, :] + np.log(np.exp(logits - m).sum(axis=1))
    lp = logits[:, channel, :] - lse
    lp = np.maximum(lp, np.log(1e-12))
    per_sample = -lp.mean(axis=1) if pixel_mean else -lp.sum(axis=1)
    return per_sample.mean()


def main():
    import cv2
    import torch
    import torch.nn.functional as F
    from skimage.metrics import peak_signal_noise_ratio, structural_similarity

    lines = [
        "#pragma once",
        "",
        "// Generated by tools/make_oracles.py. Reference values computed with",
        "// independent numerical libraries (numpy/torch/opencv/scikit-image);",
        "// inputs are reproduced in C++ via tests/support/oracle_stream.hpp.",
        "// Do not edit by hand.",
        "",
        "namespace oracle {",
        "",
    ]

    # --- counting loss: mean squared error on a random 4x4 pair ---
    pred = uniforms(1001, 16)
    gt = uniforms(1002, 16)
    emit_scalar(lines, "kLossCount4x4", np.mean((pred - gt) ** 2))

    # --- feature-discriminator loss on random 2x3 score maps ---
    src = (uniforms(2001, 12) * 4.0 - 2.0).reshape(1, 2, 6)
    tgt = (uniforms(2002, 12) * 4.0 - 2.0).reshape(1, 2, 6)
    for pixel_mean, tag in ((False, "Sum"), (True, "Mean")):
        v = log_softmax_nll(src, 0, pixel_mean) + log_softmax_nll(tgt, 1, pixel_mean)
        emit_scalar(lines, f"kLossFeatureDisc2x3{tag}", v)
        a = log_softmax_nll(src, 0, pixel_mean) + log_softmax_nll(tgt, 0, pixel_mean)
        emit_scalar(lines, f"kLossFeatureAdv2x3{tag}", a)

    # --- map-discriminator losses on a random batch of 4 ---
    vsrc = (uniforms(2003, 8) * 6.0 - 3.0).reshape(4, 2, 1)
    vtgt = (uniforms(2004, 8) * 6.0 - 3.0).reshape(4, 2, 1)
    emit_scalar(lines, "kLossMapDiscB4",
                log_softmax_nll(vsrc, 0, False) + log_softmax_nll(vtgt, 1, False))
    emit_scalar(lines, "kLossMapAdvB4", log_softmax_nll(vtgt, 0, False))

    # --- bilinear resize (half-pixel centers, clamped edges) ---
    x44 = uniforms(3001, 16).reshape(1, 1, 4, 4)
    tx = torch.from_numpy(x44)
    up66 = F.interpolate(tx, size=(6, 6), mode="bilinear", align_corners=False)
    dn33 = F.interpolate(tx, size=(3, 3), mode="bilinear", align_corners=False)
    cv_up = cv2.resize(x44[0, 0], (6, 6), interpolation=cv2.INTER_LINEAR)
    assert np.allclose(up66.numpy()[0, 0], cv_up, atol=1e-9), "torch/cv2 resize disagree"
    emit_array(lines, "kResize4x4To6x6", up66.numpy())
    emit_array(lines, "kResize4x4To3x3", dn33.numpy())

    # --- pyramid-consistency loss on an 8x8 / 7x7 / 9x9 triple ---
    a_full = uniforms(4001, 64).reshape(1, 1, 8, 8)
    a_m = uniforms(4002, 49).reshape(1, 1, 7, 7)
    a_n = uniforms(4003, 81).reshape(1, 1, 9, 9)
    m, n = 0.9, 1.1
    rm = F.interpolate(torch.from_numpy(a_m), size=(8, 8), mode="bilinear",
                       align_corners=False).numpy() * m * m
    rn = F.interpolate(torch.from_numpy(a_n), size=(8, 8), mode="bilinear",
                       align_corners=False).numpy() * n * n
    emit_scalar(lines, "kLossSpr8x8",
                np.mean((a_full - rm) ** 2) + np.mean((a_full - rn) ** 2))

    # --- PSNR / SSIM reference on a random 32x32 pair, data range 1 ---
    img_a = uniforms(5001, 1024).reshape(32, 32)
    img_b = np.clip(img_a + (uniforms(5002, 1024).reshape(32, 32) - 0.5) * 0.2, 0.0, 1.0)
    emit_scalar(lines, "kPsnr32x32", peak_signal_noise_ratio(img_a, img_b, data_range=1.0))
    emit_scalar(lines, "kSsim32x32",
                structural_similarity(img_a, img_b, data_range=1.0, gaussian_weights=True,
                                      sigma=1.5, use_sample_covariance=False, win_size=11))

    # --- density map from points: truncated renormalized Gaussian stamps ---
    def density(xs, ys, h, w, sigma, scale):
        hd, wd = round(h * scale), round(w * scale)
        grid = np.zeros((hd, wd))
        r = 4.0 * sigma
        jj, ii = np.meshgrid(np.arange(wd), np.arange(hd))
        cx, cy = (jj + 0.5) / scale, (ii + 0.5) / scale
        for x, y in zip(xs, ys):
            d2 = (cx - x) ** 2 + (cy - y) ** 2
            ker = np.where(d2 <= r * r, np.exp(-d2 / (2.0 * sigma * sigma)), 0.0)
            z = ker.sum()
            if z <= 0.0:
                grid[min(hd - 1, int(y * scale)), min(wd - 1, int(x * scale))] += 1.0
            else:
                grid += ker / z
        return grid

    xs5 = uniforms(6001, 5) * 16.0
    ys5 = uniforms(6002, 5) * 16.0
    emit_array(lines, "kDensity5pt16x16", density(xs5, ys5, 16, 16, 1.5, 1.0))
    xs37 = uniforms(6003, 37) * 128.0
    ys37 = uniforms(6004, 37) * 128.0
    g37 = density(xs37, ys37, 128, 128, 4.0, 0.125)
    emit_array(lines, "kDensity37pt16x16", g37)
    emit_scalar(lines, "kDensity37Sum", g37.sum())

    # --- convolution stack vs torch ---
    xc = uniforms(7001, 2 * 5 * 5).reshape(1, 2, 5, 5)
    wc = (uniforms(7002, 3 * 2 * 3 * 3) - 0.5).reshape(3, 2, 3, 3)
    bc = uniforms(7003, 3) - 0.5
    txc, twc, tbc = map(torch.from_numpy, (xc, wc, bc))
    emit_array(lines, "kConv3x3Pad1", F.conv2d(txc, twc, tbc, stride=1, padding=1).numpy())
    emit_array(lines, "kConv3x3Dil2Pad2",
               F.conv2d(txc, twc, tbc, stride=1, padding=2, dilation=2).numpy())
    emit_array(lines, "kConv3x3Stride2Pad1",
               F.conv2d(txc, twc, tbc, stride=2, padding=1).numpy())

    xd = uniforms(7004, 2 * 4 * 4).reshape(1, 2, 4, 4)
    wd_ = (uniforms(7005, 2 * 3 * 3 * 3) - 0.5).reshape(2, 3, 3, 3)
    bd = uniforms(7006, 3) - 0.5
    emit_array(lines, "kConvT3x3S2P1O1",
               F.conv_transpose2d(torch.from_numpy(xd), torch.from_numpy(wd_),
                                  torch.from_numpy(bd), stride=2, padding=1,
                                  output_padding=1).numpy())

    xp = (uniforms(7007, 3 * 4 * 4) - 0.5).reshape(1, 3, 4, 4)
    emit_array(lines, "kMaxpool2", F.max_pool2d(torch.from_numpy(xp), 2).numpy())
    alpha = np.array([0.1, 0.25, 0.4])
    emit_array(lines, "kPrelu",
               F.prelu(torch.from_numpy(xp), torch.from_numpy(alpha)).numpy())

    # --- three Adam steps on a diagonal quadratic vs torch.optim ---
    p0 = np.array([1.0, -2.0, 0.5])
    curv = torch.tensor([1.0, 3.0, 0.25], dtype=torch.float64)
    tp = torch.tensor(p0, requires_grad=True)
    opt = torch.optim.Adam([tp], lr=0.1, betas=(0.9, 0.999), eps=1e-8)
    for _ in range(3):
        opt.zero_grad()
        (0.5 * (curv * tp * tp).sum()).backward()
        opt.step()
    emit_array(lines, "kAdam3Steps", tp.detach().numpy())

    lines += ["", "}  // namespace oracle", ""]
    out = "tests/support/oracles.hpp"
    with open(out, "w") as f:
        f.write("\n".join(lines))
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
