use std::collections::HashMap;
use std::path::PathBuf;

use infomorph_server::config::{Config, ENV_DATA_DIR, ENV_PORT, ENV_PROVIDER_ENDPOINT, ENV_PROVIDER_TOKEN};
use infomorph_server::error::ServiceError;

fn vars(pairs: &[(&str, &str)]) -> HashMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn defaults_use_the_mock_provider() {
    let c = Config::resolve(None, &HashMap::new()).unwrap();
    assert_eq!(c, Config::default());
    assert_eq!(c.providers().default_id(), "mock");
}

#[test]
fn file_values_are_overridden_by_the_environment() {
    let c = Config::from_toml(
        "port = 9000\ndata_dir = \"/srv/im\"\n[provider]\nkind = \"http\"\nendpoint = \"http://llm:8000/v1\"\nname = \"lab\"\n",
    )
    .unwrap();
    assert_eq!(c.port, 9000);
    assert_eq!(c.provider.endpoint.as_deref(), Some("http://llm:8000/v1"));

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("im.toml");
    std::fs::write(&file, "port = 9000\n").unwrap();
    let env = vars(&[
        (ENV_PORT, "9100"),
        (ENV_DATA_DIR, "/tmp/im"),
        (ENV_PROVIDER_ENDPOINT, "http://other/v1"),
        (ENV_PROVIDER_TOKEN, "secret"),
    ]);
    let c = Config::resolve(Some(&file), &env).unwrap();
    assert_eq!(c.port, 9100);
    assert_eq!(c.data_dir, PathBuf::from("/tmp/im"));
    assert_eq!(c.provider.kind, "http");
    assert_eq!(c.provider.token.as_deref(), Some("secret"));
    let set = c.providers();
    assert_eq!(set.default_id(), "http:default");
    assert!(set.get("mock").is_some());
}

#[test]
fn invalid_configs_name_the_offending_key() {
    let path_of = |e: ServiceError| match e {
        ServiceError::Validation { path, .. } => path,
        other => panic!("unexpected {other:?}"),
    };
    assert_eq!(path_of(Config::from_toml("[provider]\ntimeout_secs = \"slow\"\n").unwrap_err()), "provider.timeout_secs");
    assert_eq!(path_of(Config::from_toml("colour = 1\n").unwrap_err()), "colour");
    let c = Config::from_toml("[provider]\nkind = \"http\"\n").unwrap();
    assert_eq!(path_of(c.validate().unwrap_err()), "provider.endpoint");
    let c = Config::from_toml("[provider]\nkind = \"oracle\"\n").unwrap();
    assert_eq!(path_of(c.validate().unwrap_err()), "provider.kind");
    let e = Config::resolve(Some(std::path::Path::new("/nonexistent/im.toml")), &HashMap::new()).unwrap_err();
    assert_eq!(e.exit_code(), 4);
}
