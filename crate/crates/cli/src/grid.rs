//! Grid syntax: `start:stop:count`, `log:start:stop:count`, or one number.

pub fn parse(spec: &str) -> Result<Vec<f64>, String> {
    let (log, body) = match spec.strip_prefix("log:") {
        Some(rest) => (true, rest),
        None => (false, spec),
    };
    let parts: Vec<&str> = body.split(':').collect();
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("bad number '{s}' in grid '{spec}'"));
    match parts.as_slice() {
        [x] if !log => Ok(vec![num(x)?]),
        [a, b, n] => {
            let (a, b) = (num(a)?, num(b)?);
            let n: usize = n.trim().parse().map_err(|_| format!("bad count '{n}' in grid '{spec}'"))?;
            if n == 0 {
                return Err(format!("grid '{spec}' has no points"));
            }
            if !(a.is_finite() && b.is_finite()) {
                return Err(format!("grid '{spec}' has non-finite bounds"));
            }
            if log && !(a > 0.0 && b > 0.0) {
                return Err(format!("log grid '{spec}' needs positive bounds"));
            }
            if n == 1 {
                return Ok(vec![a]);
            }
            let step = |i: usize| i as f64 / (n - 1) as f64;
            Ok((0..n)
                .map(|i| {
                    if i == n - 1 {
                        b
                    } else if log {
                        (a.ln() + (b.ln() - a.ln()) * step(i)).exp()
                    } else {
                        a + (b - a) * step(i)
                    }
                })
                .collect())
        }
        _ => Err(format!("grid '{spec}' must be start:stop:count, log:start:stop:count or a number")),
    }
}

#[cfg(test)]
mod tests {
    use super::parse;

    #[test]
    fn linear_and_log() {
        assert_eq!(parse("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        let g = parse("log:1:100:3").unwrap();
        assert!((g[1] - 10.0).abs() < 1e-12 && g[2] == 100.0);
        assert_eq!(parse("2.5").unwrap(), vec![2.5]);
        assert_eq!(parse("3:4:1").unwrap(), vec![3.0]);
    }

    #[test]
    fn rejects_bad_grids() {
        for s in ["", "1:2", "a:1:2", "1:2:0", "log:0:1:3", "log:5", "1:2:x"] {
            assert!(parse(s).is_err(), "{s}");
        }
    }
}
