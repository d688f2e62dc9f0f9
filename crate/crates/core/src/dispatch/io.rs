use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{Courier, Order};
use crate::error::{Error, Result};

/// Reads one JSON value per non-empty line; `what` names the file in errors.
pub fn read_jsonl<T: DeserializeOwned>(what: &'static str, r: impl BufRead) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::format(what, format!("line {}: {e}", k + 1)))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(items: &[T], mut w: impl Write) -> Result<()> {
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_orders_jsonl(r: impl BufRead) -> Result<Vec<Order>> {
    let orders: Vec<Order> = read_jsonl("order file", r)?;
    for o in &orders {
        o.validate()?;
    }
    Ok(orders)
}

pub fn write_orders_jsonl(orders: &[Order], w: impl Write) -> Result<()> {
    write_jsonl(orders, w)
}

pub fn read_couriers_jsonl(r: impl BufRead) -> Result<Vec<Courier>> {
    let couriers: Vec<Courier> = read_jsonl("courier file", r)?;
    for c in &couriers {
        c.validate()?;
    }
    Ok(couriers)
}

pub fn write_couriers_jsonl(couriers: &[Courier], w: impl Write) -> Result<()> {
    write_jsonl(couriers, w)
}

/// `new_orders,couriers` rows.
pub fn write_histogram_csv(hist: &BTreeMap<usize, usize>, w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["new_orders", "couriers"])?;
    for (k, v) in hist {
        wr.write_record([k.to_string(), v.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::route::tests::order;
    use crate::dispatch::OnHand;
    use crate::geo::AoiId;
    use crate::network::CourierId;

    #[test]
    fn round_trip() {
        let orders = vec![order(1, 0, 2), order(2, 3, 1)];
        let mut buf = Vec::new();
        write_orders_jsonl(&orders, &mut buf).unwrap();
        assert_eq!(read_orders_jsonl(&buf[..]).unwrap(), orders);

        let mut c = Courier::idle(CourierId(4), AoiId(2), 3);
        c.on_hand.push(OnHand {
            order: order(9, 2, 3),
            picked_up: true,
        });
        let mut buf = Vec::new();
        write_couriers_jsonl(std::slice::from_ref(&c), &mut buf).unwrap();
        assert_eq!(read_couriers_jsonl(&buf[..]).unwrap(), vec![c]);
    }

    #[test]
    fn bad_line_is_format_error() {
        let err = read_orders_jsonl(&b"{\"id\": 1}\n"[..]).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }
}
