import pytest

from firmtriage.extraction import (FailureReason, FirmwareImage, extract_recursive,
                                   looks_encrypted, window_entropy)

from conftest import dropbear_tree, firmware_blob, gzip_bytes, random_bytes, tar_bytes


def _image(blob: bytes, sid: str = "s1") -> FirmwareImage:
    return FirmwareImage(sid, blob)


def test_sha256_is_checked():
    img = _image(b"abc")
    assert img.sha256 == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    with pytest.raises(ValueError):
        FirmwareImage("s", b"abc", sha256="0" * 64)
    with pytest.raises(ValueError):
        FirmwareImage("", b"abc")


def test_gzip_tar_rootfs_succeeds(tmp_path, dropbear_image):
    fs = extract_recursive(_image(dropbear_image), workspace=tmp_path)
    assert fs.ok and fs.failure_reason is None
    for d in ("/bin", "/lib", "/etc"):
        assert fs.exists(d)
    assert fs.filesystem == "Tar"
    assert fs.resolved["/bin/sh"] == "/bin/busybox"
    assert (tmp_path / "02-rootfs" / "bin" / "busybox").is_file()
    carved = {p.name for p in (tmp_path / "01-carve").iterdir()}
    assert {"64.Gzip.bin", "64.Gzip"} <= carved
    log = (tmp_path / "extraction.log").read_text().splitlines()
    assert all(len(line.split("\t")) == 4 for line in log)


def test_rootfs_below_prefix_directory(tmp_path):
    tree = {f"squashfs-root/{k}": v for k, v in dropbear_tree().items()}
    tree["squashfs-root"] = None
    fs = extract_recursive(_image(tar_bytes(tree)), workspace=tmp_path)
    assert fs.ok
    assert fs.exists("/usr/sbin/dropbear")


def test_random_4k_is_no_filesystem(tmp_path):
    fs = extract_recursive(_image(random_bytes(4096)), workspace=tmp_path)
    assert fs.failure_reason is FailureReason.NO_FILESYSTEM


def test_high_entropy_image_is_encrypted(tmp_path):
    fs = extract_recursive(_image(random_bytes(1 << 16)), workspace=tmp_path)
    assert fs.failure_reason is FailureReason.ENCRYPTED


def test_entropy_windows():
    ent = window_entropy(bytes(range(256)) * 32)
    assert ent.tolist() == [8.0, 8.0]
    assert window_entropy(b"\0" * 4096).tolist() == [0.0]
    assert not looks_encrypted(random_bytes(4096))
    assert looks_encrypted(random_bytes(8192))


def test_depth_limit(tmp_path):
    blob = tar_bytes({"bin": None, "etc": None, "lib": None})
    for i in range(10):
        blob = gzip_bytes(tar_bytes({f"layer{i}.tar.gz": blob}), name=None)
    fs = extract_recursive(_image(blob), depth_limit=8, workspace=tmp_path / "a")
    assert fs.failure_reason is FailureReason.DEPTH_LIMIT
    # the partial tree is kept for audit
    assert any((tmp_path / "a" / "01-carve").iterdir())
    deep = extract_recursive(_image(blob), depth_limit=30, workspace=tmp_path / "b")
    assert deep.ok


def test_unsupported_flash_filesystem(tmp_path):
    blob = b"\0" * 64 + b"hsqs" + random_bytes(2000)
    fs = extract_recursive(_image(blob), workspace=tmp_path)
    assert fs.failure_reason is FailureReason.UNSUPPORTED_FORMAT
    assert (tmp_path / "01-carve" / "64.SquashFS.bin").is_file()


def test_adapter_routes_flash_filesystem(tmp_path):
    blob = b"\0" * 16 + b"hsqs" + random_bytes(512)
    # stand-in adapter that materialises a minimal root tree
    template = "sh -c 'test -s {input} && mkdir -p {output}/bin {output}/etc'"
    fs = extract_recursive(_image(blob), workspace=tmp_path, adapters={"SquashFS": template})
    assert fs.ok and fs.filesystem == "SquashFS"


def test_extraction_is_deterministic(tmp_path, dropbear_image):
    a = extract_recursive(_image(dropbear_image), workspace=tmp_path / "a")
    b = extract_recursive(_image(dropbear_image), workspace=tmp_path / "b")
    assert a.listing() == b.listing()


def test_rerun_into_same_workspace(tmp_path, dropbear_image):
    first = extract_recursive(_image(dropbear_image), workspace=tmp_path)
    second = extract_recursive(_image(dropbear_image), workspace=tmp_path)
    assert first.listing() == second.listing()
