"""Patch counts for the FFTP geometries and the square baseline on 128 x 1000 (and 1024) frames."""

from fftp.patcher import AUDIOSET_FFTP, AUDIOSET_SQUARE, patch_count


def main():
    print(f"{'mode':<7}{'patch':>9}{'stride':>9}{'T':>6}{'grid':>9}{'patches':>9}")
    rows = [(p, 1000) for p in AUDIOSET_FFTP] + [(AUDIOSET_SQUARE, 1000), (AUDIOSET_SQUARE, 1024)]
    for p, T in rows:
        n_f, n_t = patch_count(p, 128, T)
        print(f"{p.mode:<7}{p.label():>9}{p.stride_label():>9}{T:>6}{f'{n_f}x{n_t}':>9}{n_f * n_t:>9}")


if __name__ == "__main__":
    main()
