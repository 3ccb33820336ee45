"""Loss thresholds and QBER limits for both protocols at both noise levels."""
from cubeqkd import channel, protocol
from cubeqkd.config import MissionConfig


def main():
    cfg = MissionConfig()
    for f in (1.0, 1.1, 1.2):
        print(f"f = {f:.1f}: E91 QBER limit {100 * protocol.max_qber_e91(f):.2f}%")
    for proto in channel.PROTOCOLS:
        for r in protocol.loss_thresholds(proto, cfg):
            print(f"{proto:4s} {r.noise_rate:5.0f} cps  total {r.total_db:7.2f} dB  link {r.link_db:7.2f} dB  "
                  f"E_max {100 * r.e_max:5.2f}%")


if __name__ == "__main__":
    main()
