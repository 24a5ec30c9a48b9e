use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::time::Duration;

/// Process settings read from the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub addr: SocketAddr,
    /// Engine threads shared by all requests.
    pub workers: usize,
    /// Hard limit on one comparison request.
    pub compare_timeout: Duration,
    /// Allowed browser origin; any origin when absent.
    pub cors_origin: Option<String>,
}

#[derive(Debug, thiserror::Error)]
#[error("environment variable {name}={value:?} is invalid: {reason}")]
pub struct SettingsError {
    pub name: &'static str,
    pub value: String,
    pub reason: String,
}

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_COMPARE_TIMEOUT: Duration = Duration::from_secs(600);

fn parse<T: std::str::FromStr>(
    name: &'static str,
    value: Option<String>,
    default: T,
) -> Result<T, SettingsError>
where
    T::Err: std::fmt::Display,
{
    match value {
        None => Ok(default),
        Some(v) => v.trim().parse().map_err(|e: T::Err| SettingsError {
            name,
            value: v,
            reason: e.to_string(),
        }),
    }
}

impl Settings {
    pub fn from_env() -> Result<Self, SettingsError> {
        Settings::from_lookup(|k| std::env::var(k).ok())
    }

    /// Reads `ASSURE_DX_ADDR`, `ASSURE_DX_PORT`, `ASSURE_DX_WORKERS`,
    /// `ASSURE_DX_COMPARE_TIMEOUT_SECS` and `ASSURE_DX_CORS_ORIGIN`.
    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, SettingsError> {
        let ip: IpAddr = parse(
            "ASSURE_DX_ADDR",
            get("ASSURE_DX_ADDR"),
            IpAddr::V4(Ipv4Addr::LOCALHOST),
        )?;
        let port: u16 = parse("ASSURE_DX_PORT", get("ASSURE_DX_PORT"), DEFAULT_PORT)?;
        let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
        let workers: usize = parse("ASSURE_DX_WORKERS", get("ASSURE_DX_WORKERS"), cpus)?;
        if workers == 0 {
            return Err(SettingsError {
                name: "ASSURE_DX_WORKERS",
                value: "0".into(),
                reason: "at least one worker is required".into(),
            });
        }
        let secs: u64 = parse(
            "ASSURE_DX_COMPARE_TIMEOUT_SECS",
            get("ASSURE_DX_COMPARE_TIMEOUT_SECS"),
            DEFAULT_COMPARE_TIMEOUT.as_secs(),
        )?;
        Ok(Settings {
            addr: SocketAddr::new(ip, port),
            workers,
            compare_timeout: Duration::from_secs(secs),
            cors_origin: get("ASSURE_DX_CORS_ORIGIN").filter(|s| !s.is_empty()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let s = Settings::from_lookup(|_| None).unwrap();
        assert_eq!(s.addr, "127.0.0.1:8080".parse().unwrap());
        assert_eq!(s.compare_timeout, DEFAULT_COMPARE_TIMEOUT);
        let s = Settings::from_lookup(|k| match k {
            "ASSURE_DX_ADDR" => Some("0.0.0.0".into()),
            "ASSURE_DX_PORT" => Some("9000".into()),
            "ASSURE_DX_WORKERS" => Some("3".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(s.addr, "0.0.0.0:9000".parse().unwrap());
        assert_eq!(s.workers, 3);
    }

    #[test]
    fn bad_values_are_named() {
        let e =
            Settings::from_lookup(|k| (k == "ASSURE_DX_PORT").then(|| "http".into())).unwrap_err();
        assert_eq!(e.name, "ASSURE_DX_PORT");
        assert!(Settings::from_lookup(|k| (k == "ASSURE_DX_WORKERS").then(|| "0".into())).is_err());
    }
}
