import os

from run_manifest import MANIFEST_NAME, RunManifest, load_json, save_json, sha256_file, verify_manifest


class TestJsonHelpers:
    def test_guardar_y_cargar(self, tmp_path):
        path = save_json(str(tmp_path / "sub" / "data.json"), {"δ": 0.39269908169872414, "ok": True})
        assert load_json(path) == {"δ": 0.39269908169872414, "ok": True}

    def test_archivo_inexistente_da_diccionario_vacio(self, tmp_path):
        assert load_json(str(tmp_path / "nada.json")) == {}

    def test_archivo_corrupto_da_diccionario_vacio(self, tmp_path):
        path = tmp_path / "roto.json"
        path.write_text("{no es json", encoding="utf-8")
        assert load_json(str(path)) == {}


class TestRunManifest:
    def test_registra_checksums_relativos(self, tmp_path):
        out = str(tmp_path)
        artifact = tmp_path / "rotated" / "u_bar.csv"
        artifact.parent.mkdir()
        artifact.write_text("contenido\n", encoding="utf-8")
        manifest = RunManifest(command="rotate", output_dir=out)
        manifest.record(str(artifact))
        assert manifest.artifacts == {"rotated/u_bar.csv": sha256_file(str(artifact))}

    def test_excluye_archivos_con_timestamps(self, tmp_path):
        log = tmp_path / "actividades.json"
        log.write_text("[]", encoding="utf-8")
        manifest = RunManifest(command="budget", output_dir=str(tmp_path))
        manifest.record(str(log))
        assert manifest.artifacts == {}

    def test_escribe_manifiesto_ordenado(self, tmp_path):
        for name in ("b.csv", "a.csv"):
            (tmp_path / name).write_text(name, encoding="utf-8")
        manifest = RunManifest(command="generate", output_dir=str(tmp_path), seed=3)
        manifest.record_all([str(tmp_path / "b.csv"), str(tmp_path / "a.csv")])
        path = manifest.write()
        data = load_json(path)
        assert os.path.basename(path) == MANIFEST_NAME
        assert list(data["artifacts"]) == ["a.csv", "b.csv"]
        assert data["seed"] == 3
        assert data["finished_at"] is not None

    def test_verificacion_detecta_cambios(self, tmp_path):
        target = tmp_path / "u.csv"
        target.write_text("1,2,3\n", encoding="utf-8")
        manifest = RunManifest(command="generate", output_dir=str(tmp_path))
        manifest.record(str(target))
        manifest.write()
        assert verify_manifest(str(tmp_path)) == []
        target.write_text("1,2,4\n", encoding="utf-8")
        assert verify_manifest(str(tmp_path)) == ["u.csv"]
