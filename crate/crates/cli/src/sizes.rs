/// Parses `4096`, `64KiB`, `4MiB`, `1GiB`, `64K` or `4M` (binary units).
pub fn parse_size(s: &str) -> Result<usize, String> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let n: usize = num.parse().map_err(|_| format!("bad size {s:?}"))?;
    let shift = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 0,
        "k" | "kb" | "kib" => 10,
        "m" | "mb" | "mib" => 20,
        "g" | "gb" | "gib" => 30,
        other => return Err(format!("unknown size unit {other:?}")),
    };
    n.checked_mul(1 << shift).ok_or_else(|| format!("size {s:?} overflows"))
}

/// A comma-separated list of sizes, taken as one argument.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeList(pub Vec<usize>);

pub fn parse_sizes(s: &str) -> Result<SizeList, String> {
    let v: Vec<usize> = s.split(',').filter(|p| !p.trim().is_empty()).map(parse_size).collect::<Result<_, _>>()?;
    if v.is_empty() {
        return Err("empty size list".into());
    }
    Ok(SizeList(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn units() {
        assert_eq!(parse_size("4096").unwrap(), 4096);
        assert_eq!(parse_size("64KiB").unwrap(), 65536);
        assert_eq!(parse_size("4MiB").unwrap(), 4 << 20);
        assert_eq!(parse_size("4096k").unwrap(), 4 << 20);
        assert!(parse_size("4XB").is_err());
        assert!(parse_size("MiB").is_err());
        assert_eq!(parse_sizes("1,64KiB").unwrap().0, vec![1, 65536]);
        assert!(parse_sizes(",").is_err());
    }
}
