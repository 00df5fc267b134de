"""Certify a clean heat run, verify the seal, then show that flipping one byte breaks it.

    python demos/sealed_certificate.py
"""

from simjudge.certify import certificate_json, verify_certificate
from simjudge.corpus import all_cases


def main() -> None:
    case = next(c for c in all_cases() if c.case_id == "k01")
    result = case.run("iv")
    cert = result.certificate
    print(f"{case.description}: {cert.outcome}, B = {cert.bound_B:.3e}, eps = {cert.tolerance_eps:g}")
    raw = certificate_json(cert).encode("utf-8")
    print(f"seal {cert.seal[:16]}...  verifies: {verify_certificate(raw)}")

    tampered = bytearray(raw)
    pos = raw.index(b'"outcome"') + 12
    tampered[pos] ^= 0x01
    print(f"after flipping byte {pos}: verifies: {verify_certificate(bytes(tampered))}")

    rejected = next(c for c in all_cases() if c.case_id == "b02").run("iv").certificate
    print(f"FTCS above its stability limit: {rejected.outcome} ({rejected.payload['rejected_condition']})")


if __name__ == "__main__":
    main()
