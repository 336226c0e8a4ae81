mod common;

use chrono::NaiveDate;
use esncast_core::io::{read_return_panel_binary, read_return_panel_csv, write_return_panel_binary, write_return_panel_csv};
use esncast_core::market_data::*;

fn bar_line(date: &str, ticker: &str, hhmm: u32, first: f64, last: f64) -> String {
    let (lo, hi) = (first.min(last), first.max(last));
    format!("{date},{ticker},{hhmm:04},{first},{hi},{lo},{last},{last},100,3\n")
}

/// One-minute bars for two tickers over one day, prices stepping by one cent a minute.
fn minute_file() -> String {
    let mut s = BAR_FIELDS.join(",") + "\n";
    for ticker in ["AAA", "BBB"] {
        let base = if ticker == "AAA" { 10.0 } else { 50.0 };
        for m in 0..=390u32 {
            let hhmm = (9 * 60 + 30 + m) / 60 * 100 + (9 * 60 + 30 + m) % 60;
            let p0 = base + 0.01 * m as f64;
            s += &bar_line("20130102", ticker, hhmm, p0, p0 + 0.01);
        }
    }
    s
}

#[test]
fn minute_bars_resample_to_grid_returns() {
    let bars = read_bars(minute_file().as_bytes(), &BarSchema::default()).unwrap();
    assert_eq!(bars.len(), 2 * 391);
    assert!(bars.rejected.is_empty());
    let ten = resample_bars(&bars, 10).unwrap();
    let cal = TradingCalendar::new(vec![NaiveDate::from_ymd_opt(2013, 1, 2).unwrap()]);
    let panel = compute_returns(&ten, &cal, &ReturnOptions::default()).unwrap();
    assert_eq!(panel.n_times(), SLOTS_PER_DAY);
    assert_eq!(panel.tickers(), &["AAA".to_string(), "BBB".to_string()]);
    assert_eq!(panel.get(0, 0), Some(0.0));
    // the 10-minute bar at slot k closes on minute 10k+9, last = base + 0.01 (10k + 10)
    for (i, base) in [(0, 10.0), (1, 50.0)] {
        for k in 1..CLOSE_SLOT as usize {
            let p = |k: usize| base + 0.01 * (10 * k + 10) as f64;
            let want = p(k) / p(k - 1) - 1.0;
            assert!((panel.get(k, i).unwrap() - want).abs() < 1e-12, "slot {k}");
        }
        // the 16:00 print opens where the 15:59 bar closed
        assert!(panel.get(CLOSE_SLOT as usize, i).unwrap().abs() < 1e-12);
    }
}

#[test]
fn malformed_rows_are_rejected_with_line_numbers() {
    let mut text = minute_file();
    text += "20130102,AAA,0931,-1,1,1,1,1,100,3\n";
    text += "notadate,AAA,0931,1,1,1,1,1,100,3\n";
    let bars = read_bars(text.as_bytes(), &BarSchema::default()).unwrap();
    let lines: Vec<usize> = bars.rejected.iter().map(|r| r.line).collect();
    assert_eq!(lines, vec![2 * 391 + 2, 2 * 391 + 3]);

    let strict = BarSchema {
        max_row_errors: 1,
        ..BarSchema::default()
    };
    assert!(read_bars(text.as_bytes(), &strict).is_err());
}

#[test]
fn resample_rejects_incompatible_steps() {
    let bars = read_bars(minute_file().as_bytes(), &BarSchema::default()).unwrap();
    assert!(resample_bars(&bars, 0).is_err());
    let ten = resample_bars(&bars, 10).unwrap();
    assert!(resample_bars(&ten, 15).is_err());
    assert!(compute_returns(&bars, &TradingCalendar::new(vec![]), &ReturnOptions::default()).is_err());
}

#[test]
fn synthetic_panels_are_seeded() {
    let a = common::panel(8, 2, 3, 0.5, 11);
    let b = common::panel(8, 2, 3, 0.5, 11);
    let c = common::panel(8, 2, 3, 0.5, 12);
    assert_eq!(a, b);
    assert_ne!(a.values(), c.values());
    assert_eq!(a.n_times(), 3 * SLOTS_PER_DAY);
    assert!(a.values().iter().all(|v| v.is_finite()));
}

#[test]
fn panel_files_round_trip() {
    let p = common::panel(5, 1, 2, 0.5, 3);
    let mut csv = Vec::new();
    write_return_panel_csv(&mut csv, &p).unwrap();
    let back = read_return_panel_csv(csv.as_slice()).unwrap();
    assert_eq!(back.tickers(), p.tickers());
    for (x, y) in back.values().iter().zip(p.values()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    let mut bin = Vec::new();
    write_return_panel_binary(&mut bin, &p).unwrap();
    assert_eq!(read_return_panel_binary(bin.as_slice()).unwrap(), p);
}

#[test]
fn horizon_targets_compound_step_returns() {
    let p = common::panel(4, 1, 2, 0.5, 5);
    for h in [Horizon::Min30, Horizon::Hr2, Horizon::Eod] {
        let tg = horizon_targets(&p, h);
        let slot = 5u8;
        let end = h.end_slot(slot).unwrap() as usize;
        let mut g = 1.0;
        for s in slot as usize + 1..=end {
            g *= 1.0 + p.get(s, 2).unwrap();
        }
        assert!((tg.get(slot as usize, 2).unwrap() - (g - 1.0)).abs() < 1e-12, "{h}");
    }
}
